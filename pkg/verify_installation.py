#!/usr/bin/env python
"""
Verification script for conc-compose
Checks dependencies, runtime modules and the scenario catalog
"""

import os
import sys

# Fix for Windows console encoding issues
if sys.platform == 'win32':
    os.environ['PYTHONIOENCODING'] = 'utf-8'
    if hasattr(sys.stdout, 'reconfigure'):
        sys.stdout.reconfigure(encoding='utf-8')
    if hasattr(sys.stderr, 'reconfigure'):
        sys.stderr.reconfigure(encoding='utf-8')


def check_python_version():
    """Verify Python 3.10+ is installed"""
    version = sys.version_info
    if version.major >= 3 and version.minor >= 10:
        print(f"✅ Python Version: {version.major}.{version.minor}.{version.micro}")
        return True
    print(f"❌ Python Version: {version.major}.{version.minor}.{version.micro} (Need 3.10+)")
    return False


def check_imports():
    """Verify all required modules can be imported"""
    modules = {
        'flask': 'Flask web framework',
        'flask_cors': 'CORS support',
        'numpy': 'NumPy',
        'networkx': 'NetworkX (wait-for graph)',
        'dotenv': 'python-dotenv',
    }

    all_ok = True
    for module_name, description in modules.items():
        try:
            __import__(module_name)
            print(f"✅ {description}: {module_name}")
        except ImportError as e:
            print(f"❌ {description}: {module_name} - {e}")
            all_ok = False
    return all_ok


def check_runtime_modules():
    """Verify the runtime and harness modules import"""
    runtime_modules = [
        'errors',
        'config',
        'exec_context',
        'liveness',
        'atoms',
        'agents',
        'stm',
        'futures_promises',
        'channels',
        'scenario_session',
        'scenarios',
        'matrix_harness',
        'serializability',
        'report_store',
        'cli',
    ]

    all_ok = True
    for mod in runtime_modules:
        try:
            __import__(mod)
            print(f"✅ {mod}.py")
        except Exception as e:
            print(f"❌ {mod}.py - {e}")
            all_ok = False
    return all_ok


def check_catalog():
    """Every matrix cell has a scenario and faithful expectations agree with the matrix"""
    from matrix_harness import scenario_list, validate_catalog

    problems = validate_catalog()
    for problem in problems:
        print(f"❌ {problem}")
    if not problems:
        print(f"✅ {len(scenario_list())} scenarios cover all 50 cells")
    return not problems


def check_smoke_run():
    """Run one fast scenario end to end"""
    from matrix_harness import scenario_run

    result = scenario_run("S-refs-agents", "faithful")
    if result.matches:
        print(f"✅ S-refs-agents: {result.observed.label} in {result.duration_ms} ms")
        return True
    print(f"❌ S-refs-agents: {result.observed.label}, expected {result.expected.label}")
    return False


def check_data_dir():
    """Report history location"""
    from config import HarnessConfig

    data_dir = HarnessConfig.from_env().data_dir
    if os.path.isdir(data_dir):
        print(f"✅ Report history directory: {data_dir}")
    else:
        print(f"⚠️  Report history directory: {data_dir} (created on first matrix run)")
    if not os.path.exists('.env'):
        print("⚠️  .env not found (defaults in use)")
    return True


def main():
    """Run all checks"""
    print("=" * 50)
    print("conc-compose - Verification")
    print("=" * 50)

    checks = [
        ("Python Version", check_python_version),
        ("Required Imports", check_imports),
        ("Runtime Modules", check_runtime_modules),
        ("Scenario Catalog", check_catalog),
        ("Smoke Run", check_smoke_run),
        ("Data Directory", check_data_dir),
    ]

    results = {}
    for name, check_func in checks:
        print(f"\n--- {name} ---")
        try:
            results[name] = check_func()
        except Exception as e:
            print(f"❌ Error during check: {e}")
            results[name] = False

    print("\n" + "=" * 50)
    print("Summary:")
    print("=" * 50)

    critical = all(results.get(name, False) for name, _ in checks)
    if critical:
        print("✅ All checks passed")
        print("🟢 Run `conc-compose matrix --mode faithful` to reproduce the matrices")
    else:
        print("❌ Some checks failed")
        print("🔴 Fix errors above before running the harness")
    return 0 if critical else 1


if __name__ == "__main__":
    sys.exit(main())

#!/usr/bin/env python3
"""
Setup script for the Continuous-Time Thermodynamic Formalism Toolkit
This script sets up the development environment and runs a smoke check
"""
import os
import sys
import subprocess
from pathlib import Path


def run_command(command, description):
    """Run a command and handle errors"""
    print(f"⏳ {description}...")
    try:
        subprocess.run(command, shell=True, check=True, capture_output=True, text=True)
        print(f"✅ {description} completed successfully")
        return True
    except subprocess.CalledProcessError as e:
        print(f"❌ {description} failed:")
        print(f"   Command: {command}")
        print(f"   Error: {e.stderr}")
        return False


def venv_tool(name):
    return f"venv\\Scripts\\{name}" if os.name == "nt" else f"venv/bin/{name}"


def check_prerequisites():
    """Check the Python version"""
    print("🔍 Checking prerequisites...")
    python_version = sys.version_info
    if python_version < (3, 10):
        print(f"❌ Python 3.10+ required, found {python_version.major}.{python_version.minor}")
        return False
    print(f"✅ Python {python_version.major}.{python_version.minor} found")
    return True


def setup_python_environment():
    """Set up Python virtual environment and install dependencies"""
    print("\n🐍 Setting up Python environment...")
    if not run_command("python -m venv venv", "Creating virtual environment"):
        return False
    pip_command = venv_tool("pip")
    if not run_command(f"{pip_command} install --upgrade pip", "Upgrading pip"):
        return False
    return run_command(f"{pip_command} install -r requirements.txt", "Installing Python dependencies")


def setup_directories():
    """Create the default output directory"""
    print("\n📁 Setting up directories...")
    Path("out").mkdir(exist_ok=True)
    print("✅ Created/verified directory: out")
    return True


def run_smoke_check():
    """Solve the shipped two-state example and run the fast unit tests"""
    print("\n🧪 Running smoke check...")
    python_command = venv_tool("python")
    if not run_command(
        f"{python_command} backend/main.py solve --config config/example1.json --out out/smoke --quiet",
        "Solving config/example1.json",
    ):
        return False
    return run_command(
        f"{python_command} -m pytest backend/tests/unit -m \"not slow\" -q --no-cov -c backend/pytest.ini",
        "Running unit tests",
    )


def main():
    """Main setup function"""
    print("🚀 Continuous-Time Thermodynamic Formalism Toolkit - Setup Script")
    print("=" * 60)

    if not check_prerequisites():
        print("\n❌ Prerequisites check failed. Please install the required software.")
        return 1
    if not setup_python_environment():
        print("\n❌ Python environment setup failed.")
        return 1
    if not setup_directories():
        print("\n❌ Directory setup failed.")
        return 1
    if not run_smoke_check():
        print("\n⚠️  Smoke check failed, but setup may still be functional.")

    print("\n🎉 Setup completed successfully!")
    print("\nNext steps:")
    print("1. Validate a document: python backend/main.py validate --config config/example1.json")
    print("2. Run a command: python backend/main.py gibbs --config config/example1.json --out out/gibbs")
    print("3. Run everything: python backend/ops/run_all_commands.py config/example1.json --out out/example1")
    return 0


if __name__ == "__main__":
    sys.exit(main())

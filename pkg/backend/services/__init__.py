"""
Services package for the thermodynamic-formalism toolkit
- Keep imports minimal to avoid side effects when importing the package
- Submodules (e.g., semigroup, monte_carlo) should be imported directly
"""

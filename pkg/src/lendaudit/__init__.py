"""Compliance auditor for Android lending apps.

Static pipeline: container -> manifest/bytecode parsing -> permission checks
against country, platform, and harmonized prohibition sets -> sensitive-API
and source-to-sink flow analysis. Plus the model-assisted policy mapping
workflow and runtime exfiltration evidence analysis.
"""

__version__ = "0.1.0"

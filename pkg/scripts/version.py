#!/usr/bin/env python3
"""Keep the glx-lab version consistent across the release files.

The version lives in two places:
- pyproject.toml
- glx_lab/__init__.py (``__version__``, printed by ``glx-lab --version``)

Usage:
    python scripts/version.py current        # Show current version
    python scripts/version.py patch          # 0.1.0 -> 0.1.1
    python scripts/version.py minor          # 0.1.0 -> 0.2.0
    python scripts/version.py major          # 0.1.0 -> 1.0.0
    python scripts/version.py set 1.2.3      # Set specific version
"""

from __future__ import annotations

import argparse
import re
import sys
from pathlib import Path

PYPROJECT = "pyproject.toml"
INIT_FILE = "glx_lab/__init__.py"
_PYPROJECT_VERSION = re.compile(r'^version = "([^"]+)"', re.MULTILINE)
_INIT_VERSION = re.compile(r'^__version__ = "([^"]+)"', re.MULTILINE)


def parse_version(version_str: str) -> tuple[int, int, int]:
    """Parse a semantic version; prerelease and build suffixes are ignored."""
    match = re.match(r"^(\d+)\.(\d+)\.(\d+)(?:-.*)?(?:\+.*)?$", version_str)
    if not match:
        msg = f"Invalid semantic version: {version_str}"
        raise ValueError(msg)
    return int(match.group(1)), int(match.group(2)), int(match.group(3))


def format_version(major: int, minor: int, patch: int) -> str:
    return f"{major}.{minor}.{patch}"


def get_current_version(root: Path = Path()) -> str:
    """Version declared in ``root/pyproject.toml``."""
    pyproject_path = root / PYPROJECT
    if not pyproject_path.exists():
        msg = f"{PYPROJECT} not found under {root}"
        raise FileNotFoundError(msg)
    match = _PYPROJECT_VERSION.search(pyproject_path.read_text(encoding="utf-8"))
    if not match:
        msg = f"Version not found in {PYPROJECT}"
        raise ValueError(msg)
    return match.group(1)


def bump(version: str, increment_type: str) -> str:
    major, minor, patch = parse_version(version)
    match increment_type:
        case "major":
            return format_version(major + 1, 0, 0)
        case "minor":
            return format_version(major, minor + 1, 0)
        case "patch":
            return format_version(major, minor, patch + 1)
        case _:
            msg = f"Invalid increment type: {increment_type}"
            raise ValueError(msg)


def increment_version(increment_type: str, root: Path = Path()) -> str:
    return bump(get_current_version(root), increment_type)


def _rewrite(path: Path, pattern: re.Pattern[str], replacement: str) -> None:
    content = path.read_text(encoding="utf-8")
    new_content, count = pattern.subn(replacement, content, count=1)
    if count == 0:
        msg = f"no version field found in {path}"
        raise ValueError(msg)
    path.write_text(new_content, encoding="utf-8")
    print(f"Updated {path} to {replacement}")


def update_all_versions(new_version: str, root: Path = Path()) -> None:
    parse_version(new_version)
    _rewrite(root / PYPROJECT, _PYPROJECT_VERSION, f'version = "{new_version}"')
    _rewrite(root / INIT_FILE, _INIT_VERSION, f'__version__ = "{new_version}"')


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(description="Manage the glx-lab version")
    parser.add_argument(
        "action",
        choices=["current", "patch", "minor", "major", "set"],
        help="Action to perform",
    )
    parser.add_argument(
        "version",
        nargs="?",
        help="Version to set (required for 'set' action)",
    )
    parser.add_argument("--root", type=Path, default=Path(), help="repository root")
    args = parser.parse_args(argv)

    try:
        current = get_current_version(args.root)
        match args.action:
            case "current":
                print(f"Current version: {current}")
            case "set":
                if not args.version:
                    print("Error: Version required for 'set' action", file=sys.stderr)
                    return 1
                update_all_versions(args.version, args.root)
            case _:
                new_version = bump(current, args.action)
                print(f"Current: {current}")
                print(f"New: {new_version}")
                update_all_versions(new_version, args.root)
    except (OSError, ValueError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

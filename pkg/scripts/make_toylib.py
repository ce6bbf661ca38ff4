#!/usr/bin/env python3
"""Regenerate the bundled toylib benchmark and its frozen fixtures.

Usage: python3 scripts/make_toylib.py [OUT_DIR]
"""

import sys

from memcoder.toylib import write_bundle

if __name__ == "__main__":
    target = sys.argv[1] if len(sys.argv) > 1 else "benchmarks/toylib"
    for name, path in write_bundle(target).items():
        print(f"{name}: {path}")

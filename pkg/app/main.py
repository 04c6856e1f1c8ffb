"""
Entry point: python app/main.py <command> [options]
"""
import os
import sys

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))
from cli import dispatch

if __name__ == "__main__":
    sys.exit(dispatch())

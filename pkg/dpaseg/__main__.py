"""
Entry point for running dpaseg as a module
"""

from .cli import run

if __name__ == '__main__':
    run()

"""Script to run flake8, pydocstyle and pylint.

Notes:
    Install them with "pip install -e .[dev]"
    Then, run "python for_dev/lint.py" in the repository root.
    Settings are read from setup.cfg.
"""
import argparse
import subprocess
import sys

from pylint.lint import Run


def get_args():
    """Get arguments."""
    parser = argparse.ArgumentParser(prog="LINT")

    parser.add_argument('--path', default='./src/nse_power_expansion', type=str)
    parser.add_argument('--threshold', default=7, type=float)
    return parser.parse_args()


def run_tool(name, path):
    """Run a linter as a module and get its exit code."""
    print(f'{name} Starting | Path: {path}')
    code = subprocess.call([sys.executable, '-m', name, path])
    print(f'{name} {"Passed" if code == 0 else "Failed"}')
    return code


if __name__ == '__main__':
    args = get_args()
    path = args.path
    threshold = args.threshold

    failed = [name for name in ['flake8', 'pydocstyle'] if run_tool(name, path) != 0]

    print('PyLint Starting | '
          f'Path: {path} | '
          f'Threshold: {threshold} ')
    score = Run([path], exit=False).linter.stats.global_note
    score_msg = f'Score: {score:.2f} | Threshold: {threshold} '
    if score < threshold:
        failed.append('pylint')
        print('PyLint Failed | ' + score_msg)
    else:
        print('PyLint Passed | ' + score_msg)

    if failed:
        raise RuntimeError(f'Lint failed. ({", ".join(failed)})')

"""Script to check if a pipeline run can be reproduced.

Notes:
    Install the package with "pip install -e ."
    Then, run the command below.
    python for_dev/test.py builtin:divergent-factorial --verbose
    It runs the pipeline twice and compares every file of the two run folders.
"""
if __name__ == "__main__":
    import argparse
    import os
    import shutil
    import sys
    from nse_power_expansion import cli, util

    mkdir = util.io_util.mkdir
    compare = util.io_util.compare

    def get_args():
        """Get arguments."""
        parser = argparse.ArgumentParser()
        parser.add_argument('config', help='Experiment json or builtin:<name>')
        parser.add_argument('--threads', default=1, type=int, help='Worker threads')
        parser.add_argument('--verbose', action='store_true', help='Show logs')
        args = parser.parse_args()
        return args

    args = get_args()
    save_folder = '__temp__'
    if os.path.exists(save_folder):
        shutil.rmtree(save_folder)
    mkdir(save_folder)

    folders = []
    for run in ['a', 'b']:
        out_dir = os.path.join(save_folder, run)
        argv = ['pipeline', '--config', args.config, '--out-dir', out_dir, '--threads', str(args.threads)]
        if args.verbose:
            argv.append('--verbose')
        code = cli.main(argv)
        if code != cli.EXIT_OK:
            sys.exit(code)
        folders.append(os.path.join(out_dir, os.listdir(out_dir)[0]))

    files = sorted(os.listdir(folders[0]))
    if files != sorted(os.listdir(folders[1])):
        raise RuntimeError('Run folders have different files.')
    for file in files:
        compare(os.path.join(folders[0], file), os.path.join(folders[1], file))

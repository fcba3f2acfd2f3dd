"""Utils for I/O.

Notes:
    Every writer here is atomic.
    Data goes to a temp file in the target folder first, then replaces the target.
"""

import hashlib
import json
import os
import tempfile


def make_temp_file(suffix=None, directory=None):
    """Make a temp file and return its path.

    Notes:
        You need to delete the file by your self.
    """
    with tempfile.NamedTemporaryFile(suffix=suffix, dir=directory, delete=False) as temp:
        temp_path = temp.name
    return temp_path


def mkdir(directory):
    """Make dirctory."""
    os.makedirs(directory, exist_ok=True)


def get_ext(file):
    """Get file extension."""
    return file.split('.')[-1]


def check(actual, expected, msg='Check failed. This is unexpected error.'):
    """Check if actual and expected is the same."""
    if actual != expected:
        print(f'actual: {actual}')
        print(f'expected: {expected}')
        raise RuntimeError(msg)


def load_json(file):
    """Load a json file."""
    with open(file, 'r', encoding='utf-8') as f:
        j = json.load(f)
    return j


def dump_json(obj):
    """Convert an object to canonical json text."""
    return json.dumps(obj, sort_keys=True, indent=2, ensure_ascii=False) + '\n'


def write_bytes(file, binary):
    """Write binary data atomically."""
    directory = os.path.dirname(os.path.abspath(file))
    mkdir(directory)
    temp = make_temp_file(suffix='.tmp', directory=directory)
    try:
        with open(temp, 'wb') as f:
            f.write(binary)
        os.replace(temp, file)
    except BaseException:
        if os.path.exists(temp):
            os.remove(temp)
        raise


def write_text(file, text):
    """Write utf-8 text atomically."""
    write_bytes(file, text.encode('utf-8'))


def save_json(file, obj):
    """Save an object as a json file."""
    write_text(file, dump_json(obj))


def content_hash(file):
    """Get sha256 of a file."""
    sha = hashlib.sha256()
    with open(file, 'rb') as f:
        for block in iter(lambda: f.read(1 << 16), b''):
            sha.update(block)
    return sha.hexdigest()


def text_hash(text):
    """Get sha256 of a string."""
    return hashlib.sha256(text.encode('utf-8')).hexdigest()


def compare(file1, file2, no_err=False):
    """Check if 2 files have the same binary data."""
    print(f'Comparing {file1} and {file2}...')
    with open(file1, 'rb') as f_1, open(file2, 'rb') as f_2:
        f1_bin = f_1.read()
        f2_bin = f_2.read()

    if f1_bin == f2_bin:
        print('Same data!')
        return True

    i = -1
    for b_1, b_2 in zip(f1_bin, f2_bin):
        i += 1
        if b_1 != b_2:
            break

    if no_err:
        return False
    raise RuntimeError(f'Not same :{i}')

"""
This module exposes Zip, an in-memory archive used to bundle the artifacts
of a run (reports, curves, effective config) into one file written at once.

Example:
        bundle = Zip().add_file('runs/default/report.csv', 'report.csv')
        bundle.write('runs/default/bundle.zip')
"""

import os
import zipfile
from io import BytesIO


class Zip(object):
    """
    In-memory zip archive

    Attributes:
        in_memory_zip: BytesIO holding the archive
        names (list): archive member names, in insertion order
    """
    def __init__(self):
        self.in_memory_zip = BytesIO()
        self.names = []

    def append(self, filename_in_zip, file_contents):
        """
        Adds a member with the given contents

        Args:
            filename_in_zip (str): member name
            file_contents (str | bytes): member contents

        Returns:
            Zip: this Zip
        """
        with zipfile.ZipFile(self.in_memory_zip, 'a', zipfile.ZIP_DEFLATED, False) as zf:
            # fixed timestamp: identical inputs give identical archives
            info = zipfile.ZipInfo(filename_in_zip, date_time=(1980, 1, 1, 0, 0, 0))
            info.compress_type = zipfile.ZIP_DEFLATED
            info.create_system = 0
            zf.writestr(info, file_contents)
        self.names.append(filename_in_zip)
        return self

    def add_file(self, path, filename_in_zip=None):
        """Adds a file from disk, named by its basename unless given"""
        with open(path, 'rb') as f:
            return self.append(filename_in_zip or os.path.basename(path), f.read())

    def add_tree(self, root, prefix='', suffixes=None):
        """
        Adds every file under `root` in sorted order

        Args:
            root (str): directory to walk
            prefix (str): folder inside the archive
            suffixes (tuple): only files ending in one of these
        """
        for directory, dirs, files in os.walk(root):
            dirs.sort()
            for name in sorted(files):
                if suffixes and not name.endswith(tuple(suffixes)):
                    continue
                path = os.path.join(directory, name)
                relative = os.path.relpath(path, root).replace(os.sep, '/')
                self.add_file(path, prefix + relative)
        return self

    def read(self):
        """Returns the archive bytes"""
        self.in_memory_zip.seek(0)
        return self.in_memory_zip.read()

    def write(self, filename):
        """Writes the archive to `filename`"""
        with open(filename, 'wb') as f:
            f.write(self.read())

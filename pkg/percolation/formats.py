"""Output writers: canonical JSON, 12-digit CSV and plain PGM."""
import csv
import json
from pathlib import Path

import numpy as np


def dumps_json(data):
    return json.dumps(data, sort_keys=True, indent=2) + '\n'


def write_json(path, data):
    path = Path(path)
    path.write_text(dumps_json(data), encoding='utf-8')
    return path


def format_value(value):
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return '%.12g' % float(value)


def write_csv(path, header, rows):
    path = Path(path)
    with path.open('w', newline='', encoding='utf-8') as handle:
        writer = csv.writer(handle, lineterminator='\n')
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])
    return path


def read_csv(path):
    with Path(path).open(newline='', encoding='utf-8') as handle:
        reader = csv.reader(handle)
        header = next(reader)
        return header, [row for row in reader]


def write_pgm(path, grid):
    """Plain P2 image, maxval 1; grid row 0 (the bottom row) is written last."""
    grid = np.asarray(grid, dtype=np.uint8)
    height, width = grid.shape
    lines = ['P2', f'{width} {height}', '1']
    lines.extend(' '.join(str(v) for v in row) for row in grid[::-1].tolist())
    path = Path(path)
    path.write_text('\n'.join(lines) + '\n', encoding='ascii')
    return path


def read_pgm(path):
    """Inverse of write_pgm: grid indexed [row, column] with row 0 at the bottom."""
    tokens = Path(path).read_text(encoding='ascii').split()
    if tokens[0] != 'P2':
        raise ValueError(f'{path} is not a plain PGM file')
    width, height = int(tokens[1]), int(tokens[2])
    values = np.array(tokens[4:4 + width * height], dtype=np.uint8).reshape(height, width)
    return values[::-1].copy()

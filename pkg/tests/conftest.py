import gzip
import struct

import numpy as np
import pytest

from pwmperc import mnist


@pytest.fixture(scope="session")
def mnist_dir():
    """Directory with the real MNIST IDX files, or skip."""
    found = mnist.find_data_dir()
    if found is None:
        pytest.skip(f"MNIST IDX files not found (set ${mnist.DATA_DIR_ENV})")
    return found


def write_idx_pair(directory, images, labels, *, images_magic=mnist.IMAGES_MAGIC,
                   labels_magic=mnist.LABELS_MAGIC, truncate_images=0,
                   label_count=None, gz=False, stem="synthetic"):
    """Write a small IDX image/label pair; knobs inject format corruption."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    img_blob = struct.pack(">iiii", images_magic, n, rows, cols) + images.tobytes()
    if truncate_images:
        img_blob = img_blob[:-truncate_images]
    lab_blob = struct.pack(">ii", labels_magic,
                           label_count if label_count is not None else len(labels))
    lab_blob += labels.tobytes()
    suffix = ".gz" if gz else ""
    img_path = directory / f"{stem}-images-idx3-ubyte{suffix}"
    lab_path = directory / f"{stem}-labels-idx1-ubyte{suffix}"
    img_path.write_bytes(gzip.compress(img_blob) if gz else img_blob)
    lab_path.write_bytes(gzip.compress(lab_blob) if gz else lab_blob)
    return img_path, lab_path

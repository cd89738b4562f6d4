"""Write data/digits.csv, the 1797-sample 8x8 handwritten digit set.

The table is the UCI "Optical Recognition of Handwritten Digits" test split
as redistributed with scikit-learn: 64 pixel counts in 0..16 followed by the
label, one sample per row, no header. The library only reads the local file.
"""

import gzip
import os
import shutil
import sys

import sklearn.datasets

src = os.path.join(os.path.dirname(sklearn.datasets.__file__), "data", "digits.csv.gz")
dst = os.path.join(os.path.dirname(__file__), "..", "data", "digits.csv")
out = sys.argv[1] if len(sys.argv) > 1 else dst

with gzip.open(src, "rb") as fin, open(out, "wb") as fout:
    shutil.copyfileobj(fin, fout)
print(out)

#!/usr/bin/env python3
"""Downloads benchmark image sets into the evaluation data root.

    python3 tools/fetch_datasets.py --mirror https://host/path --dest data/benchmarks Set5 BSD68

Each id is fetched as <mirror>/<id>.zip (falling back to <id>.tar.gz) and
its PNG/JPEG/BMP files are flattened into <dest>/<id>/. No archive locations
are built in: point --mirror at wherever your copies live. A directory path
works too, for archives already on disk.
"""
import argparse
import io
import os
import sys
import tarfile
import urllib.error
import urllib.request
import zipfile

KNOWN = ["Set5", "Set14", "BSD68", "Urban100", "Classic5", "LIVE1"]
IMAGE_EXT = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


def read(location):
    if os.path.exists(location):
        with open(location, "rb") as f:
            return f.read()
    with urllib.request.urlopen(location, timeout=120) as r:
        return r.read()


def members(blob, name):
    if name.endswith(".zip"):
        with zipfile.ZipFile(io.BytesIO(blob)) as z:
            for info in z.infolist():
                if not info.is_dir():
                    yield info.filename, z.read(info)
    else:
        with tarfile.open(fileobj=io.BytesIO(blob), mode="r:gz") as t:
            for m in t.getmembers():
                if m.isfile():
                    yield m.name, t.extractfile(m).read()


def fetch(mirror, dest, dataset):
    last_error = None
    for suffix in (".zip", ".tar.gz"):
        name = dataset + suffix
        location = mirror.rstrip("/") + "/" + name
        try:
            blob = read(location)
        except (OSError, urllib.error.URLError) as e:
            last_error = e
            continue
        out_dir = os.path.join(dest, dataset)
        os.makedirs(out_dir, exist_ok=True)
        count = 0
        for path, data in members(blob, name):
            base = os.path.basename(path)
            if base.startswith(".") or not base.lower().endswith(IMAGE_EXT):
                continue
            with open(os.path.join(out_dir, base), "wb") as f:
                f.write(data)
            count += 1
        if count == 0:
            raise RuntimeError(f"{location} holds no images")
        print(f"{dataset}: {count} image(s) -> {out_dir}")
        return
    raise RuntimeError(f"{dataset}: no archive at {mirror} ({last_error})")


def main():
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--mirror", required=True, help="URL or directory holding <id>.zip / <id>.tar.gz")
    p.add_argument("--dest", default=os.environ.get("NBR_DATA_ROOT", "data/benchmarks"))
    p.add_argument("datasets", nargs="*", default=KNOWN)
    args = p.parse_args()
    failed = 0
    for d in args.datasets:
        try:
            fetch(args.mirror, args.dest, d)
        except Exception as e:  # keep going so one bad id does not block the rest
            print(f"error: {e}", file=sys.stderr)
            failed += 1
    return 1 if failed else 0


if __name__ == "__main__":
    sys.exit(main())

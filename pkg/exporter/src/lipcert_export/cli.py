"""lipcert-export --in model.keras --out net.json; manifest on stdout."""

import argparse
import sys

from .exporter import UnsupportedLayer, export_file


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="lipcert-export")
    ap.add_argument("--in", dest="model", required=True, help="Keras model file")
    ap.add_argument("--out", required=True, help="interchange JSON to write")
    args = ap.parse_args(argv)
    try:
        manifest = export_file(args.model, args.out)
    except UnsupportedLayer as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(manifest.to_json())
    return 0


if __name__ == "__main__":
    sys.exit(main())

import argparse
import sys

from .extract import CodecError, SceneError, extract, fetch_pair_flow
from .models import ModelLoadError, load_backends
from .raster import RasterError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gcvd-adapter", description="Write engine scene directories from video")
    sub = parser.add_subparsers(dest="command", required=True)

    ex = sub.add_parser("extract", help="decode a video and run the prior models")
    ex.add_argument("video")
    ex.add_argument("out")
    ex.add_argument("--long-side", type=int, default=384)
    ex.add_argument("--backend", required=True, help="torchscript:<dir> or module:function")
    ex.add_argument("--force", action="store_true")

    pf = sub.add_parser("fetch-pair-flow", help="write pair flows i->j and j->i")
    pf.add_argument("scene")
    pf.add_argument("i", type=int)
    pf.add_argument("j", type=int)
    pf.add_argument("--backend", required=True)

    args = parser.parse_args(argv)
    try:
        backends = load_backends(args.backend)
        if args.command == "extract":
            out = extract(args.video, args.out, backends, long_side=args.long_side, force=args.force)
            print(out)
        else:
            for path in fetch_pair_flow(args.scene, args.i, args.j, backends):
                print(path)
    except (ModelLoadError, CodecError, SceneError, RasterError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())

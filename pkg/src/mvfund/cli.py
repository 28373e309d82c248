"""``mvfund solve|check|synth|simulate``.

Exit codes:
    0  success (``check``: consistent)
    1  ``check``: inconsistent; other library errors
    2  parse or usage error
    3  viewing graph disconnected
    4  no valid triplet cover
    5  solver produced non-finite values
    6  ``check``: incomplete block set
"""

import argparse
import itertools
import json
import logging
import sys

import numpy as np

from . import io
from .admm import PAPER_CONFIG, AdmmConfig
from .errors import (
    CoverInfeasible,
    DisconnectedGraph,
    IncompleteMatrix,
    MVFundError,
    NonFinite,
    ProblemFormatError,
    UncoverableView,
)
from .mvfm import NViewFundamental, check_consistency, from_cameras
from .pipeline import PipelineConfig, run
from .reconstruction import normalization_from_tracks
from .synth import LAYOUTS, SceneSpec, consistency_experiment, estimate_pairwise, generate_scene, write_csv
from .viewing_graph import CoverParams

log = logging.getLogger("mvfund")

EXIT_OK = 0
EXIT_INCONSISTENT = 1
EXIT_PARSE = 2
EXIT_DISCONNECTED = 3
EXIT_COVER = 4
EXIT_NONFINITE = 5
EXIT_INCOMPLETE = 6


def _solver_config(args) -> PipelineConfig:
    if args.paper_parity:
        return PipelineConfig.paper_parity()
    admm = AdmmConfig(alpha=args.alpha, iterations=args.iters)
    cover = CoverParams(n_trees=args.trees, delta1=args.delta1)
    return PipelineConfig(admm=admm, cover=cover)


def _write_json(obj, path):
    with open(path, "w") as fh:
        json.dump(obj, fh, sort_keys=True, indent=1)
        fh.write("\n")


def cmd_solve(args):
    prob = io.read_problem(args.input)
    result = run(prob, _solver_config(args))
    rec = io.ReconstructionRecord(
        n=prob.n,
        cameras=result.reconstruction.cameras,
        points=result.reconstruction.points,
        summary={
            "mean_reprojection_error": result.mean_error,
            "admm_final_sigma_ratio": result.admm.final_sigma_ratio,
            "admm_iterations": result.admm.iterations,
            "cover_size": len(result.cover.triplets),
            "invalid_tracks": result.reconstruction.invalid_tracks,
        },
    )
    out = args.output or "reconstruction.txt"
    io.write_reconstruction(rec, out)
    _write_json(result.diagnostics(), out + ".diag.json")
    print(f"mean_reprojection_error {io.fmt(result.mean_error)}")
    return EXIT_OK


def format_report(rep):
    lines = [
        f"rank_of_F {rep.rank_of_F}",
        f"sigma_ratio {rep.sigma_ratio:.6g}",
        f"eig_signature {rep.eig_signature[0]}+/{rep.eig_signature[1]}-",
        "block_row_ranks " + " ".join(str(r) for r in rep.block_row_ranks),
        f"block_ranks_ok {str(rep.block_ranks_ok).lower()}",
        f"diagonal_ok {str(rep.diagonal_ok).lower()}",
        rep.summary(),
    ]
    return "\n".join(lines)


def cmd_check(args):
    prob = io.read_problem(args.input)
    F = NViewFundamental.from_blocks(prob.n, prob.blocks, check_rank=False)
    if not F.complete:
        raise IncompleteMatrix(f"{prob.n * (prob.n - 1) // 2 - len(prob.blocks)} blocks are missing")
    if prob.tracks:
        # a block-diagonal congruence: rank and signature are unchanged, conditioning improves
        norm = normalization_from_tracks(prob.tracks, prob.n, allow_missing=True)
        D = np.zeros((3 * prob.n, 3 * prob.n))
        for v, N in enumerate(norm.transforms):
            D[3 * v:3 * v + 3, 3 * v:3 * v + 3] = np.linalg.inv(N)
        F = NViewFundamental.from_matrix(D.T @ F.data @ D, F.known)
    rep = check_consistency(F)
    print(format_report(rep))
    return EXIT_OK if rep.consistent else EXIT_INCONSISTENT


def cmd_synth(args):
    spec = SceneSpec(n_cameras=args.cameras, n_points=args.points, layout=args.layout,
                     noise_sigma=args.noise, seed=args.seed)
    bundle = generate_scene(spec)
    pairs = []
    for i, j in itertools.combinations(range(bundle.n), 2):
        if np.count_nonzero(bundle.visible()[i] & bundle.visible()[j]) >= 8:
            pairs.append((i, j))
    if args.blocks == "exact":
        F = from_cameras(bundle.views)
        blocks = {e: F.block(*e) for e in pairs}
        prob = io.Problem(bundle.n, list(bundle.meta), blocks, {e: 1.0 for e in pairs}, bundle.tracks())
    else:
        G = estimate_pairwise(bundle, pairs)
        prob = io.problem_from_bundle(bundle, G)
    out = args.output or "problem.txt"
    io.write_problem(prob, out)
    truth = io.ReconstructionRecord(
        n=bundle.n,
        cameras=bundle.cameras,
        points={p: np.append(X, 1.0) for p, X in enumerate(bundle.points)},
        summary={"noise_sigma": spec.noise_sigma, "seed": spec.seed},
    )
    io.write_reconstruction(truth, out + ".truth")
    return EXIT_OK


def _sigma_list(text):
    vals = [t for t in text.split(",") if t.strip()]
    if not vals:
        raise argparse.ArgumentTypeError("sigma list must not be empty")
    try:
        out = [float(v) for v in vals]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid sigma list {text!r}") from None
    if any(v < 0 for v in out):
        raise argparse.ArgumentTypeError("noise levels must be nonnegative")
    return out


def cmd_simulate(args):
    cfg = PAPER_CONFIG if args.paper_parity else AdmmConfig(alpha=args.alpha, iterations=args.iters)
    spec = SceneSpec(n_cameras=args.cameras, n_points=args.points, layout=args.layout, seed=args.seed)
    seeds = [args.seed + k for k in range(args.seeds)]
    rows = consistency_experiment(spec, args.sigmas, seeds, n_triplets=args.triplets, cfg=cfg)
    if args.output:
        with open(args.output, "w") as fh:
            write_csv(rows, fh)
    else:
        write_csv(rows, sys.stdout)
    return EXIT_OK


def _positive_int(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="mvfund", description="Projective structure from motion via n-view fundamental matrices.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def solver_flags(q):
        q.add_argument("--alpha", type=float, default=AdmmConfig.alpha)
        q.add_argument("--iters", type=_positive_int, default=AdmmConfig.iterations)
        q.add_argument("--paper-parity", action="store_true",
                       help="pin alpha=0.001, 1000 iterations, 5 trees, delta1=0.03 (overrides the other flags)")

    q = sub.add_parser("solve", help="reconstruct cameras and points from a problem file")
    q.add_argument("input")
    q.add_argument("--output", "-o")
    q.add_argument("--trees", type=_positive_int, default=CoverParams.n_trees)
    q.add_argument("--delta1", type=float, default=CoverParams.delta1)
    solver_flags(q)
    q.set_defaults(func=cmd_solve)

    q = sub.add_parser("check", help="test a complete block set for consistency")
    q.add_argument("input")
    q.add_argument("--paper-parity", action="store_true", help="accepted for uniformity; no effect")
    q.set_defaults(func=cmd_check)

    q = sub.add_parser("synth", help="write a synthetic problem file and its ground truth")
    q.add_argument("--output", "-o")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--noise", type=float, default=0.0)
    q.add_argument("--layout", choices=LAYOUTS, default="ring")
    q.add_argument("--cameras", type=_positive_int, default=SceneSpec.n_cameras)
    q.add_argument("--points", type=_positive_int, default=2000)
    q.add_argument("--blocks", choices=("estimated", "exact"), default="estimated",
                   help="eight-point estimates from the tracks, or blocks composed from the true cameras")
    q.add_argument("--paper-parity", action="store_true", help="accepted for uniformity; no effect")
    q.set_defaults(func=cmd_synth)

    q = sub.add_parser("simulate", help="graph-consistency curves as CSV")
    q.add_argument("--sigmas", type=_sigma_list, default=[0.0, 0.5, 1.0, 2.0])
    q.add_argument("--seeds", type=_positive_int, default=5)
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--cameras", type=_positive_int, default=SceneSpec.n_cameras)
    q.add_argument("--points", type=_positive_int, default=SceneSpec.n_points)
    q.add_argument("--layout", choices=LAYOUTS, default="ring")
    q.add_argument("--triplets", type=_positive_int, default=15)
    q.add_argument("--output", "-o")
    solver_flags(q)
    q.set_defaults(func=cmd_simulate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "noise", 0.0) < 0:
        parser.error("--noise must be nonnegative")
    try:
        return args.func(args)
    except ProblemFormatError as exc:
        print(f"mvfund: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"mvfund: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except DisconnectedGraph as exc:
        print(f"mvfund: disconnected viewing graph: {exc}", file=sys.stderr)
        return EXIT_DISCONNECTED
    except (CoverInfeasible, UncoverableView) as exc:
        print(f"mvfund: no valid triplet cover: {exc}", file=sys.stderr)
        return EXIT_COVER
    except NonFinite as exc:
        print(f"mvfund: solver diverged: {exc}", file=sys.stderr)
        return EXIT_NONFINITE
    except IncompleteMatrix as exc:
        print(f"mvfund: incomplete block set: {exc}", file=sys.stderr)
        return EXIT_INCOMPLETE
    except (MVFundError, ValueError) as exc:
        print(f"mvfund: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())

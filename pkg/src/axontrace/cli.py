"""Batch command-line entry points.

Subcommands: kde, fragments, trace, compare, phantom, serve. All take a JSON
config via --config; --seed and --out override config fields. Outputs are
deterministic for fixed inputs and seed. Failures print a machine-readable
JSON object on stderr; exit code 2 marks I/O or validation problems and 3 an
unreachable end state.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

from .appearance import fit_from_labels, kl_divergence, load_label_sidecar
from .fragments import generate_fragments, save_fragment_set
from .metrics import export_swc, frechet_discrete, import_swc, resample_polyline, spatial_distance
from .phantom import PhantomSpec, write_phantom
from .solver import NoPathError
from .tracer import NeuronTracer
from .transitions import Hyperparams
from .volume import VolumeFormatError, load_probability_map, load_volume

EXIT_OK = 0
EXIT_ERROR = 2
EXIT_NO_PATH = 3


@dataclass
class PipelineConfig:
    volume: str | None = None
    probability_map: str | None = None
    labels: str | None = None
    out: str = "."
    threshold: float = 0.9
    min_voxels: int = 5
    step_um: float = 1.0
    seed: int = 0
    hyperparams: dict = field(default_factory=dict)

    @classmethod
    def load(cls, path, seed=None, out=None) -> "PipelineConfig":
        payload = json.loads(Path(path).read_text())
        known = {f: payload[f] for f in cls.__dataclass_fields__ if f in payload}
        cfg = cls(**known)
        if seed is not None:
            cfg.seed = seed
        if out is not None:
            cfg.out = out
        return cfg

    def hyper(self) -> Hyperparams:
        return Hyperparams.from_dict(self.hyperparams)

    def require(self, *names) -> None:
        for name in names:
            if getattr(self, name) is None:
                raise ValueError(f"config is missing required field {name!r}")


def _emit(payload: dict) -> None:
    sys.stdout.write(json.dumps(payload, sort_keys=True) + "\n")


def _fail(code: str, message: str) -> None:
    sys.stderr.write(json.dumps({"error": {"code": code, "message": message}}) + "\n")


def _out_dir(cfg: PipelineConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_kde(cfg: PipelineConfig) -> int:
    cfg.require("volume", "labels")
    volume = load_volume(cfg.volume)
    fg, bg = load_label_sidecar(cfg.labels)
    model = fit_from_labels(volume, fg, bg)
    out = _out_dir(cfg)
    model_path = out / "model.json"
    model_path.write_text(model.to_json())
    _emit({"model": str(model_path), "h_fg": model.h_fg, "h_bg": model.h_bg,
           "kl_nats": kl_divergence(model)})
    return EXIT_OK


def cmd_fragments(cfg: PipelineConfig) -> int:
    cfg.require("probability_map")
    prob_map = load_probability_map(cfg.probability_map)
    fragset = generate_fragments(prob_map, cfg.threshold, cfg.min_voxels)
    out = _out_dir(cfg)
    save_fragment_set(fragset, out / "fragments.json", out / "fragment_labels")
    _emit({
        "fragments_json": str(out / "fragments.json"),
        "labels_volume": str(out / "fragment_labels.json"),
        "n_fragments": len(fragset),
    })
    return EXIT_OK


def _fit_tracer(cfg: PipelineConfig) -> NeuronTracer:
    cfg.require("volume", "probability_map", "labels")
    volume = load_volume(cfg.volume)
    prob_map = load_probability_map(cfg.probability_map)
    fg, bg = load_label_sidecar(cfg.labels)
    hyper = cfg.hyper()
    tracer = NeuronTracer(
        threshold=cfg.threshold,
        min_voxels=cfg.min_voxels,
        alpha_d=hyper.alpha_d,
        alpha_kappa=hyper.alpha_kappa,
        d_max_um=hyper.d_max_um,
        theta_max_deg=hyper.theta_max_deg,
        prune_successor_angle=hyper.prune_successor_angle,
    )
    return tracer.fit(volume, prob_map, labels=(fg, bg))


def cmd_trace(cfg: PipelineConfig, args) -> int:
    tracer = _fit_tracer(cfg)
    out = _out_dir(cfg)
    if args.graph_jsonl:
        tracer.graph_.to_jsonl(args.graph_jsonl)
    trace = tracer.trace(
        args.start_fragment, args.start_orientation,
        args.end_fragment, args.end_orientation,
    )
    trace_path = out / "trace.json"
    trace_path.write_text(json.dumps(trace.to_dict(), sort_keys=True))
    export_swc(out / "trace.swc", trace.polyline)
    _emit({
        "trace_json": str(trace_path),
        "swc": str(out / "trace.swc"),
        "n_states": len(trace.states),
        "weight": trace.total_weight,
    })
    return EXIT_OK


def cmd_compare(args) -> int:
    a = resample_polyline(import_swc(args.swc_a), args.step_um)
    b = resample_polyline(import_swc(args.swc_b), args.step_um)
    _emit({"frechet_um": frechet_discrete(a, b), "sd_um": spatial_distance(a, b)})
    return EXIT_OK


def cmd_phantom(args, seed=None, out=None) -> int:
    payload = json.loads(Path(args.spec).read_text())
    spec = PhantomSpec.from_dict(payload)
    if seed is not None:
        spec.seed = seed
    paths = write_phantom(spec, out or "phantom_out")
    _emit(paths)
    return EXIT_OK


def cmd_serve(cfg: PipelineConfig, port: int) -> int:
    import uvicorn

    from .service import build_session, create_app

    app = create_app(build_session(cfg))
    uvicorn.run(app, host="127.0.0.1", port=port, log_level="warning")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="axontrace",
        description="Trace axons through segmentation fragments as most-probable paths.",
    )
    parser.add_argument("--config", help="pipeline config JSON")
    parser.add_argument("--seed", type=int, default=None, help="override config seed")
    parser.add_argument("--out", default=None, help="override output directory")
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("kde", help="fit the foreground/background intensity model")
    sub.add_parser("fragments", help="build fragments from the probability map")

    p_trace = sub.add_parser("trace", help="most probable path between two fragments")
    p_trace.add_argument("--start-fragment", type=int, required=True)
    p_trace.add_argument("--start-orientation", default="forward",
                         choices=["forward", "reversed"])
    p_trace.add_argument("--end-fragment", type=int, required=True)
    p_trace.add_argument("--end-orientation", default="forward",
                         choices=["forward", "reversed"])
    p_trace.add_argument("--graph-jsonl", default=None,
                         help="also dump the transition graph as JSON lines")

    p_cmp = sub.add_parser("compare", help="distance metrics between two SWC files")
    p_cmp.add_argument("swc_a")
    p_cmp.add_argument("swc_b")
    p_cmp.add_argument("--step-um", type=float, default=1.0)

    p_ph = sub.add_parser("phantom", help="generate a synthetic tube phantom")
    p_ph.add_argument("--spec", required=True, help="phantom spec JSON")

    p_srv = sub.add_parser("serve", help="serve the interactive tracing API")
    p_srv.add_argument("--port", type=int, default=8000)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "compare":
            return cmd_compare(args)
        if args.command == "phantom":
            return cmd_phantom(args, seed=args.seed, out=args.out)
        if args.config is None:
            raise ValueError(f"{args.command} requires --config")
        cfg = PipelineConfig.load(args.config, seed=args.seed, out=args.out)
        if args.command == "kde":
            return cmd_kde(cfg)
        if args.command == "fragments":
            return cmd_fragments(cfg)
        if args.command == "trace":
            return cmd_trace(cfg, args)
        if args.command == "serve":
            return cmd_serve(cfg, args.port)
        raise ValueError(f"unknown command {args.command!r}")
    except NoPathError as exc:
        _fail("no_path", str(exc))
        return EXIT_NO_PATH
    except (VolumeFormatError, OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        _fail("invalid_input", str(exc))
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())

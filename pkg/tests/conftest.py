import json

import numpy as np
import pytest

from axontrace.phantom import PhantomSpec, write_phantom


@pytest.fixture(scope="session")
def phantom_workspace(tmp_path_factory):
    """Small straight-tube phantom written to disk plus a pipeline config."""
    root = tmp_path_factory.mktemp("phantom_ws")
    spec = PhantomSpec(
        kind="polyline",
        dims=(100, 40, 30),
        spacing=(0.5, 0.5, 1.0),
        points_um=[[4, 10, 15], [46, 12, 15]],
        radius_um=1.0,
        n_labels=600,
        seed=7,
    )
    paths = write_phantom(spec, root / "data")
    out_dir = root / "out"
    config = {
        "volume": paths["volume"],
        "probability_map": paths["probability_map"],
        "labels": paths["labels"],
        "out": str(out_dir),
        "threshold": 0.9,
        "min_voxels": 5,
        "step_um": 1.0,
        "seed": 7,
        "hyperparams": {
            "alpha_d": 10,
            "alpha_kappa": 1000,
            "d_max_um": 15,
            "theta_max_deg": 150,
        },
    }
    config_path = root / "config.json"
    config_path.write_text(json.dumps(config, sort_keys=True))
    return {
        "root": root,
        "config": config_path,
        "out": out_dir,
        "paths": paths,
        "spec": spec,
    }


def pick_terminal_fragments(fragments_payload, gt_start, gt_end):
    """Choose (fragment id, orientation) pairs for the curve's two ends."""
    def nearest(point, want_tail):
        best = None
        for item in fragments_payload["fragments"]:
            d0 = np.linalg.norm(np.asarray(item["x0"]) - point)
            d1 = np.linalg.norm(np.asarray(item["x1"]) - point)
            if want_tail:
                orient, d = ("forward", d0) if d0 <= d1 else ("reversed", d1)
            else:
                orient, d = ("forward", d1) if d1 <= d0 else ("reversed", d0)
            if best is None or d < best[2]:
                best = (item["id"], orient, d)
        return best[0], best[1]

    return nearest(np.asarray(gt_start), True), nearest(np.asarray(gt_end), False)

"""Time end-to-end inference for one intersection on a 1500 x 1500 grid.

    python scripts/bench_inference.py --repeats 5

Four roads, six angle candidates per road (perpendicular plus five offsets
around the angle-map mode), position step of one pixel, single process.
"""
import argparse
import dataclasses
import statistics
import time

from crosswalk.evaluation import TABLE2_CORRUPTION
from crosswalk.featuremaps import corrupt, render_oracle
from crosswalk.geometry import GridSpec
from crosswalk.inference import EnergyConfig, infer_scene, prepare_road
from crosswalk.scene import GeneratorConfig, generate_scene

SIZE = 1500


def benchmark_scene(seed: int = 0):
    """A four-road scene re-gridded to 1500 x 1500 pixels, with corrupted oracle maps."""
    scene = generate_scene(GeneratorConfig(n_roads=(4, 4), seed=seed), 0)
    res = scene.grid.resolution
    half = SIZE * res / 2
    grid = GridSpec((-half + res / 2, -half + res / 2), res, SIZE, SIZE)
    scene = dataclasses.replace(scene, grid=grid)
    maps = corrupt(render_oracle(scene), dataclasses.replace(TABLE2_CORRUPTION, angle_drift=0.0))
    return scene, maps


def time_inference(scene, maps, cfg: EnergyConfig, repeats: int) -> list[float]:
    infer_scene(scene, maps, cfg)  # warm-up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        infer_scene(scene, maps, cfg)
        times.append(time.perf_counter() - t0)
    return times


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    scene, maps = benchmark_scene(args.seed)
    cfg = EnergyConfig(position_step=scene.grid.resolution)
    counts = [len(prepare_road(maps, r, scene.intersection, cfg).accumulators) for r in scene.roads]
    print(f"grid {maps.spec.width_px}x{maps.spec.height_px}, roads {len(scene.roads)}, candidates per road {counts}")
    times = time_inference(scene, maps, cfg, args.repeats)
    print(f"median {statistics.median(times) * 1000:.1f} ms, best {min(times) * 1000:.1f} ms over {args.repeats} runs")


if __name__ == "__main__":
    main()

"""Smoke test for the starscreen_py extension module.

Build first, e.g. `maturin develop -m crates/python/Cargo.toml`, then run
`python python/smoke_test.py`.
"""

import starscreen_py as ss


def main():
    scene = ss.synthetic_scene(200, 150, 7)
    assert (scene.width, scene.height) == (200, 150)

    # exact crop: the true centre must survive screening
    x0, y0, side = 0, 0, 24
    for y in range(0, 150 - side, 4):
        for x in range(0, 200 - side, 4):
            if scene.crop(x, y, side, side).std_dev() > 25:
                x0, y0 = x, y
                break
        else:
            continue
        break
    template = scene.crop(x0, y0, side, side)
    cfg = ss.ScreeningConfig()
    result = ss.screen(scene, template, cfg)
    c = (side - 1) // 2
    assert result.contains(x0 + c, y0 + c, side), "true centre pruned"
    stats = result.stats()
    print(f"exact crop: {len(result)} candidates, patch pruning {stats['patch_pruning']:.3f}, "
          f"region pruning {stats['region_pruning']:.3f}")

    best = ss.match_candidates(scene, template, result, 10.0)
    assert (best["cx"], best["cy"]) == (x0 + c, y0 + c)
    assert best["score"] > 0.999

    # rotated case at scale 1
    tpl, truth = ss.make_case(scene, 3, 1.0, 1.0, 20.0, 24)
    narrow = ss.ScreeningConfig(alpha=1.0, beta=1.0)
    res = ss.screen(scene, tpl, narrow)
    overlap = ss.overlap_preserved(res, truth["footprint"])
    best = ss.match_candidates(scene, tpl, res)
    err = ((best["cx"] - truth["center"][0]) ** 2 + (best["cy"] - truth["center"][1]) ** 2) ** 0.5
    print(f"rotated case: angle {truth['angle']:.1f}, overlap {overlap:.3f}, match error {err:.2f}px")
    assert err <= 5.0

    assert abs(ss.ncc_score(scene, template, x0 + c, y0 + c) - 1.0) < 1e-9
    assert ss.GrayImage.from_pgm(scene.to_pgm()) == scene

    try:
        ss.ScreeningConfig(alpha=1.1, beta=0.9)
    except ValueError:
        pass
    else:
        raise AssertionError("invalid range accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()

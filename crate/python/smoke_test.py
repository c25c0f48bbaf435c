"""Smoke test for the mvhuman_py extension.

Build and install first:
    pip install maturin
    maturin build --release -m crates/py/Cargo.toml -o dist
    pip install dist/mvhuman_py-*.whl
"""

import json

import mvhuman_py as mh


def main() -> None:
    scenario = mh.simulate(overrides=["seed=4", "timesteps=12", "persons=3"])
    assert scenario.num_persons == 3
    assert scenario.num_observations > 0

    # same seed, same bytes
    again = mh.simulate(overrides=["seed=4", "timesteps=12", "persons=3"])
    assert again.to_json() == scenario.to_json()

    result = mh.run(scenario)
    assert len(result) == 3, result
    assert abs(result.scale["globalRatio"] - 1.0) < 1e-6

    evaluation = mh.evaluate(result, scenario)
    assert evaluation.association["accuracy"] == 100.0
    for key in ("waMpjpe", "wMpjpe", "gaMpjpe", "paMpjpe"):
        assert evaluation.metrics[key] < 1e-6, (key, evaluation.metrics)

    # JSON in and out
    for doc in (scenario, result, evaluation):
        text = doc.to_json()
        assert json.loads(text)["schema"] == mh.SCHEMA
        assert mh.load(text).to_json() == text
    observations = mh.Observations.from_json(scenario.observations_json())
    assert len(mh.run(observations)) == 3

    # configuration and errors
    only_avg = mh.PipelineConfig(overrides=["fusion.strategy=only-avg"])
    assert "only-avg" in repr(only_avg)
    try:
        mh.PipelineConfig(overrides=["association.lambdaPose=0.5"])
    except mh.ConfigError as e:
        assert "lambda" in str(e)
    else:
        raise AssertionError("lambda weights not summing to one must be rejected")
    try:
        mh.simulate(overrides=["occlusionRate=1.5"])
    except mh.ConfigError as e:
        assert "occlusionRate" in str(e)
    else:
        raise AssertionError("occlusion rate above one must be rejected")

    noisy = mh.simulate(overrides=["seed=1", "timesteps=8", "keypointNoisePx=2", "poseNoise=0.05"])
    csv = mh.ablate(noisy).splitlines()
    assert csv[0].startswith("variant,")
    assert len(csv) == 1 + 8

    print("smoke test passed:", scenario, result, evaluation)


if __name__ == "__main__":
    main()

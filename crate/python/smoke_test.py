"""Quick check of the dvfsim_py extension: run a preset and read the metrics."""

import json

import dvfsim_py


def main():
    profile = json.loads(dvfsim_py.default_profile())
    assert profile["name"] == "default"

    names = dvfsim_py.preset_names()
    assert "fft_switch" in names, names

    report = json.loads(dvfsim_py.run(dvfsim_py.preset("fft_switch")))
    jobs = {j["task"]: j for j in report["jobs"]}
    print(f"fft_switch: fft {jobs['fft']['energy_with_transition_J'] * 1e6:.2f} uJ, "
          f"total {report['energy']['energy_J'] * 1e6:.2f} uJ")

    m = json.loads(dvfsim_py.metrics())
    print(f"sleep saving {m['sleep_saving']:.3f}, DSME best {m['dsme_best_saving']:.3f} "
          f"at {m['dsme_best_level']}")

    try:
        dvfsim_py.run("{\"mac\": {\"mode\": \"bogus\"}}")
    except ValueError as e:
        print("bad scenario rejected:", e)
    else:
        raise AssertionError("bad scenario accepted")


if __name__ == "__main__":
    main()

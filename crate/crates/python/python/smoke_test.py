"""End-to-end check of the extension module on a tiny synthetic dataset."""

import math
import tempfile
from pathlib import Path

import gdsrec_py as g


def main():
    with tempfile.TemporaryDirectory() as tmp:
        data = Path(tmp) / "data"
        n_ratings, n_trust = g.synth(30, 20, 240, 60, str(data), seed=3)
        assert (n_ratings, n_trust) == (240, 60)

        cfg = g.RunConfig(
            ratings=data / "ratings.txt",
            trust=data / "trust.txt",
            out_dir=Path(tmp) / "run",
            epochs=3,
            dim=8,
            attn_hidden=8,
        )
        cfg.validate()
        assert "users=30" in g.stats(cfg)

        report, log = g.train(cfg)
        assert len(log) == 3 and log[0].startswith("1,")
        assert report["mae"] <= report["rmse"]

        again = g.evaluate(str(Path(tmp) / "run"))
        assert math.isclose(again["rmse"], report["rmse"], rel_tol=0, abs_tol=1e-12)

        model = g.TrainedModel.load(str(Path(tmp) / "run"))
        rating, prob = model.predict("0", "0")
        assert math.isfinite(rating) and prob is None
        cold, _ = model.predict("nobody", "nothing")
        assert math.isfinite(cold)

        try:
            g.RunConfig(colour="blue")
        except ValueError:
            pass
        else:
            raise AssertionError("unknown key accepted")

    assert g.rmse([1.0, 2.0], [1.0, 4.0]) == math.sqrt(2.0)
    assert g.auc([0.1, 0.9], [False, True]) == 1.0
    assert g.relationship_coefficient({1: 4.0, 2: 1.0}, {1: 5.0, 2: 4.0}) == 2
    print("smoke test passed")


if __name__ == "__main__":
    main()

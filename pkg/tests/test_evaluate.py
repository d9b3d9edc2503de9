"""PSNR oracle cases and evaluation-grid contracts."""

import math

import numpy as np
import pytest

from dropsr.autograd import Node
from dropsr.degrade import add_gaussian_noise, resize
from dropsr.evaluate import (
    EvalReport,
    EvalRow,
    center_crop_multiple,
    degrade_for_eval,
    evaluate_grid,
    format_db,
    psnr,
    write_report_csv,
    write_summary_csv,
)
from dropsr.model import ModelConfig, build_model
from dropsr.rng import derive_stream
from dropsr.synthetic import make_corpus, make_image


class _BicubicStub:
    """Identity 'network': plain bicubic upsample of the input."""

    def __init__(self, s):
        self.s = s

    def forward(self, x, mode="eval", rng=None):
        batch = x.value if isinstance(x, Node) else x
        up = np.stack([resize(img.astype(np.float64), float(self.s), "bicubic") for img in batch])
        out = Node(up.astype(np.float32))
        return out, out


class TestPsnr:
    def test_identical_is_inf(self):
        a = make_image(derive_stream(6000, 0), 16)
        assert psnr(a, a.copy()) == math.inf

    def test_one_ulp255_closed_form(self):
        a = np.full((3, 8, 8), 0.25)
        b = a + 1.0 / 255.0
        want = 20.0 * math.log10(255.0)
        assert psnr(a, b) == pytest.approx(want, abs=1e-3)
        assert abs(psnr(a, b) - 48.1308) < 1e-3

    def test_full_range_error_is_zero(self):
        a = np.zeros((3, 4, 4))
        b = np.ones((3, 4, 4))
        assert psnr(a, b) == 0.0

    def test_clamped_before_comparison(self):
        a = np.full((3, 4, 4), -3.0)
        b = np.full((3, 4, 4), 9.0)
        assert psnr(a, b) == 0.0

    def test_symmetry_exact(self):
        a = make_image(derive_stream(6001, 0), 12)
        b = make_image(derive_stream(6001, 1), 12)
        assert psnr(a, b) == psnr(b, a)

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape mismatch"):
            psnr(np.zeros((3, 4, 4)), np.zeros((3, 4, 5)))

    def test_noise_monotonicity(self):
        img = make_image(derive_stream(6002, 0), 32)
        values = []
        for i, sigma in enumerate((5.0, 20.0, 50.0)):
            noisy = add_gaussian_noise(img, sigma, derive_stream(6003, i))
            values.append(psnr(noisy, img))
        assert values[0] > values[1] > values[2]

    def test_format_db(self):
        assert format_db(math.inf) == "inf"
        assert format_db(48.13080361) == "48.130804"


class TestCenterCrop:
    def test_crops_to_multiple(self):
        img = np.arange(3 * 97 * 95, dtype=np.float64).reshape(3, 97, 95)
        out = center_crop_multiple(img, 4)
        assert out.shape == (3, 96, 92)
        assert np.array_equal(out, img[:, 0:96, 1:93])

    def test_exact_multiple_unchanged(self):
        img = make_image(derive_stream(6100, 0), 16)
        assert np.array_equal(center_crop_multiple(img, 4), img)

    def test_too_small_rejected(self):
        with pytest.raises(ValueError, match="smaller than"):
            center_crop_multiple(np.zeros((3, 2, 8)), 4)


class TestGrid:
    def test_bicubic_stub_clean_kind_sane(self):
        images = make_corpus(3, 6200, 24)
        report = evaluate_grid(_BicubicStub(2), {"toy": images}, ["clean"], s=2)
        assert len(report.rows) == 1
        row = report.rows[0]
        assert row.kind == "clean"
        assert len(row.per_image) == 3
        assert all(math.isfinite(v) and v > 0.0 for v in row.per_image)

    def test_grid_deterministic(self):
        images = make_corpus(2, 6201, 24)
        a = evaluate_grid(_BicubicStub(2), {"toy": images}, ["clean", "n"], s=2)
        b = evaluate_grid(_BicubicStub(2), {"toy": images}, ["clean", "n"], s=2)
        assert a == b

    def test_mean_is_arithmetic_mean(self):
        images = make_corpus(3, 6202, 24)
        report = evaluate_grid(_BicubicStub(2), {"toy": images}, ["n", "j"], s=2)
        for row in report.rows:
            assert abs(row.mean_psnr - float(np.mean(row.per_image))) <= 1e-9

    def test_kind_rows_stable_across_kind_sets(self):
        # adding another kind to the run must not change an existing cell
        images = make_corpus(2, 6203, 24)
        only_n = evaluate_grid(_BicubicStub(2), {"toy": images}, ["n"], s=2)
        both = evaluate_grid(_BicubicStub(2), {"toy": images}, ["b", "n"], s=2)
        n_row = [r for r in both.rows if r.kind == "n"]
        assert n_row[0] == only_n.rows[0]

    def test_degrade_for_eval_shapes_and_determinism(self):
        img = make_image(derive_stream(6204, 0), 32)
        lr1 = degrade_for_eval(img, "b+n+j", 2, eval_seed=5, image_index=1)
        lr2 = degrade_for_eval(img, "b+n+j", 2, eval_seed=5, image_index=1)
        assert lr1.shape == (3, 16, 16)
        assert np.array_equal(lr1, lr2)
        lr3 = degrade_for_eval(img, "b+n+j", 2, eval_seed=5, image_index=2)
        assert not np.array_equal(lr1, lr3)

    def test_real_net_grid_runs(self):
        net = build_model(ModelConfig(n_blocks=2, n_feats=8, scale=2), derive_stream(6205, 0))
        images = make_corpus(2, 6206, 24)
        report = evaluate_grid(net, {"toy": images}, ["clean", "b+n+j"], s=2, model_tag="toy")
        assert [r.kind for r in report.rows] == ["clean", "b+n+j"]
        assert all(math.isfinite(v) for r in report.rows for v in r.per_image)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ValueError, match="empty"):
            evaluate_grid(_BicubicStub(2), {"toy": []}, ["clean"], s=2)


class TestCsv:
    def _report(self):
        rows = (
            EvalRow("m", "clean", "toy", math.inf, (math.inf, math.inf)),
            EvalRow("m", "n", "toy", 30.5, (30.0, 31.0)),
        )
        return EvalReport(rows=rows)

    def test_report_csv(self, tmp_path):
        path = tmp_path / "report.csv"
        write_report_csv(self._report(), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "model,degradation,dataset,image,psnr_db"
        assert lines[1] == "m,clean,toy,0,inf"
        assert lines[4] == "m,n,toy,1,31.000000"
        assert len(lines) == 5

    def test_summary_csv(self, tmp_path):
        path = tmp_path / "summary.csv"
        write_summary_csv(self._report(), path)
        lines = path.read_text().splitlines()
        assert lines[0] == "model,degradation,dataset,mean_psnr_db,images"
        assert lines[1] == "m,clean,toy,inf,2"
        assert lines[2] == "m,n,toy,30.500000,2"

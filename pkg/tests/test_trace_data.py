import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latscale.trace_data import (
    Block,
    DataFormatError,
    DatasetTooShortError,
    EPSILON,
    MetricSeries,
    NormalizationState,
    RANGE_FLOOR,
    SeriesKind,
    TraceDataset,
    WindowSpec,
    load_dataset,
    make_windows,
    normalize_window,
    p95,
    save_dataset,
)


def write_csv(path, text):
    path.write_text(text)
    return path


def small_dataset(n=500):
    t = np.arange(n)
    return TraceDataset(
        time_index=t,
        series=(
            MetricSeries("cps.green", SeriesKind.FRONT_END_CALLS, np.linspace(1, 50, n)),
            MetricSeries("pods.cart", SeriesKind.HORIZONTAL_RESOURCE, np.full(n, 3.0), "cart"),
            MetricSeries("latency_p95.green", SeriesKind.TARGET_LATENCY, np.linspace(10, 90, n)),
        ),
    )


class TestLoadDataset:
    def test_schema_identity(self, tmp_path):
        lines = ["t,cps.green,pods.cart,latency_p95.green"]
        for i in range(500):
            lines.append(f"{i},{1.0 + i % 7},{2 + i % 3},{50.0 + i % 11}")
        path = write_csv(tmp_path / "d.csv", "\n".join(lines) + "\n")
        ds = load_dataset(path)
        assert ds.n_steps == 500
        assert ds.time_index[-1] == 499
        assert ds.traces == ["green"]
        horizontal = [s for s in ds.series if s.kind is SeriesKind.HORIZONTAL_RESOURCE]
        assert len(horizontal) == 1
        assert horizontal[0].microservice == "cart"

    def test_empty_file_is_missing_column(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "")
        with pytest.raises(DataFormatError, match="missing column"):
            load_dataset(path)

    def test_duplicated_time_index(self, tmp_path):
        path = write_csv(
            tmp_path / "d.csv",
            "t,latency_p95.green\n0,1\n1,2\n1,3\n2,4\n",
        )
        with pytest.raises(DataFormatError, match="duplicated time index") as exc:
            load_dataset(path)
        assert exc.value.row == 4  # header is row 1, so t=1 repeats on file row 4

    def test_out_of_order_rows_rejected(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "t,latency_p95.green\n0,1\n2,2\n1,3\n")
        with pytest.raises(DataFormatError, match="out of order"):
            load_dataset(path)

    def test_ragged_row(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "t,latency_p95.green\n0,1\n1\n")
        with pytest.raises(DataFormatError, match="ragged row"):
            load_dataset(path)

    def test_non_numeric_cell_location(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "t,latency_p95.green\n0,1\n1,oops\n")
        with pytest.raises(DataFormatError, match="non-numeric") as exc:
            load_dataset(path)
        assert exc.value.row == 3
        assert exc.value.column == "latency_p95.green"

    def test_unknown_column_name(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "t,wat.green\n0,1\n")
        with pytest.raises(DataFormatError, match="cannot classify"):
            load_dataset(path)

    def test_roundtrip_exact(self, tmp_path):
        ds = small_dataset(40)
        save_dataset(ds, tmp_path / "d.csv")
        back = load_dataset(tmp_path / "d.csv")
        for a, b in zip(ds.series, back.series):
            assert a.name == b.name and a.kind == b.kind
            np.testing.assert_array_equal(a.values, b.values)

    def test_explicit_schema_mapping(self, tmp_path):
        path = write_csv(tmp_path / "d.csv", "t,calls.x,lat.x\n0,1,5\n1,2,6\n")
        ds = load_dataset(
            path,
            schema={
                "calls.x": (SeriesKind.FRONT_END_CALLS, None),
                "lat.x": (SeriesKind.TARGET_LATENCY, None),
            },
        )
        assert ds.traces == ["x"]
        assert ds.get("calls.x").kind is SeriesKind.FRONT_END_CALLS


class TestP95:
    def test_paper_style_boundary(self):
        # 95 responses at or under 100 ms, 5 slower: p95 is 100 ms.
        samples = [100.0] * 95 + [250.0] * 5
        assert p95(samples) == 100.0

    def test_constant(self):
        assert p95([7.5] * 13) == 7.5

    def test_nearest_rank_1_to_20(self):
        assert p95(list(range(1, 21))) == 19

    def test_empty_raises(self):
        with pytest.raises(ValueError):
            p95([])

    @given(st.lists(st.floats(0, 1e6, allow_nan=False), min_size=1, max_size=400))
    def test_matches_sort_oracle(self, samples):
        arr = sorted(samples)
        rank = int(np.ceil(0.95 * len(arr)))
        assert p95(samples) == arr[rank - 1]


class TestWindows:
    def test_single_window_boundary(self):
        ds = small_dataset(450)
        windows = make_windows(ds, WindowSpec(400, 50), "green")
        assert len(windows) == 1

    def test_eleven_windows(self):
        ds = small_dataset(460)
        windows = make_windows(ds, WindowSpec(400, 50), "green")
        assert len(windows) == 11

    def test_too_short(self):
        ds = small_dataset(100)
        with pytest.raises(DatasetTooShortError):
            make_windows(ds, WindowSpec(400, 50), "green")

    def test_target_cannot_be_a_feature(self):
        ds = small_dataset(200)
        with pytest.raises(ValueError, match="among the features"):
            make_windows(ds, WindowSpec(64, 16), "green",
                         ["cps.green", "latency_p95.green"])

    def test_no_target_leakage_in_any_decoder(self):
        ds = small_dataset(480)
        for w in make_windows(ds, WindowSpec(400, 50), "green"):
            assert "latency_p95.green" not in w.decoder.feature_names
            assert w.encoder.feature_names[-1] == "latency_p95.green"

    def test_blocks_align_with_source(self):
        ds = small_dataset(200)
        w = make_windows(ds, WindowSpec(64, 16), "green")[5]
        assert w.start == 5
        np.testing.assert_array_equal(w.encoder.values[:, 0], ds.get("cps.green").values[5:69])
        np.testing.assert_array_equal(w.future_target, ds.target("green").values[69:85])

    @given(
        st.integers(1, 40),
        st.integers(1, 40),
        st.integers(0, 60),
    )
    @settings(max_examples=60, deadline=None)
    def test_window_count_formula(self, k, tau, extra):
        n = k + tau + extra
        ds = small_dataset(n)
        windows = make_windows(ds, WindowSpec(k, tau), "green")
        assert len(windows) == n - k - tau + 1


class TestNormalization:
    def test_constant_series(self):
        block = Block(("x",), np.array([[5.0], [5.0], [5.0]]))
        scaled, state = normalize_window(block)
        np.testing.assert_allclose(scaled.values[:, 0], [EPSILON] * 3)
        lo, rng, eps = state.params["x"]
        assert lo == 5.0
        assert rng == RANGE_FLOOR
        assert eps == EPSILON

    def test_zero_to_ten(self):
        block = Block(("x",), np.array([[0.0], [10.0]]))
        scaled, _ = normalize_window(block)
        np.testing.assert_allclose(scaled.values[:, 0], [0.01, 1.01], atol=1e-9)

    def test_empty_block_raises(self):
        with pytest.raises(ValueError):
            normalize_window(Block(("x",), np.zeros((0, 1))))

    def test_json_roundtrip(self):
        block = Block(("a", "b"), np.array([[1.0, 2.0], [3.0, 4.0]]))
        _, state = normalize_window(block)
        back = NormalizationState.from_json(state.to_json())
        assert back.params == state.params

    @given(
        st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=2, max_size=50),
    )
    @settings(max_examples=1000, deadline=None)
    def test_roundtrip_and_positivity(self, values):
        block = Block(("x",), np.asarray(values).reshape(-1, 1))
        scaled, state = normalize_window(block)
        assert np.all(scaled.values > 0)
        back = state.invert("x", scaled.values[:, 0])
        scale = max(1.0, float(np.max(np.abs(values))))
        np.testing.assert_allclose(back, values, rtol=0, atol=1e-9 * scale)


class TestInvariants:
    def test_uniform_step_enforced(self):
        with pytest.raises(ValueError, match="uniform step"):
            TraceDataset(
                time_index=np.array([0, 1, 3]),
                series=(MetricSeries("latency_p95.g", SeriesKind.TARGET_LATENCY, np.ones(3)),),
            )

    def test_one_target_per_trace(self):
        with pytest.raises(ValueError, match="more than one target"):
            TraceDataset(
                time_index=np.arange(3),
                series=(
                    MetricSeries("latency_p95.g", SeriesKind.TARGET_LATENCY, np.ones(3)),
                    MetricSeries("lat_alt.g", SeriesKind.TARGET_LATENCY, np.ones(3)),
                ),
            )

    def test_resource_series_needs_microservice(self):
        with pytest.raises(ValueError, match="microservice"):
            MetricSeries("pods.cart", SeriesKind.HORIZONTAL_RESOURCE, np.ones(3))

    def test_pod_counts_must_be_positive_integers(self):
        with pytest.raises(ValueError, match="positive integers"):
            MetricSeries("pods.cart", SeriesKind.HORIZONTAL_RESOURCE, np.array([1.0, 2.5, 3.0]), "cart")
        with pytest.raises(ValueError, match="positive integers"):
            MetricSeries("pods.cart", SeriesKind.HORIZONTAL_RESOURCE, np.array([0.0, 1.0, 2.0]), "cart")

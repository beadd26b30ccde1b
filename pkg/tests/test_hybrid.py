import numpy as np
import pytest

from transit_eta.errors import DataError, MissingModel, UnknownLine
from transit_eta.evaluation import mae_std
from transit_eta.features import FeatureContext, FeatureSet, build_longdist_dataset
from transit_eta.hybrid import (BANDS, DEFAULT_CELLS, DEFAULT_TABLE, DispatchTable, WILDCARD_LINE, band_of, dispatch,
                                hybrid_predict, load_dispatch, registry_key, write_dispatch)
from transit_eta.models import MlpConfig, RbfnConfig, build_ha, predict, train_model
from transit_eta.synth import SynthSpec, generate
from transit_eta.timetable import LineGroup, group_of

MLP, RBF, TT, HA = "mlp", "rbfn", FeatureSet.TIMETABLE, FeatureSet.HISTAVG


# Published best-model grid, one row per line group (ids 1-8), bands <=5 / 6-15 / >=16.
PUBLISHED = """
mlp+timetable mlp+histavg mlp+histavg
mlp+timetable mlp+histavg mlp+histavg
mlp+timetable mlp+histavg mlp+histavg
mlp+timetable mlp+histavg mlp+histavg
mlp+timetable mlp+histavg mlp+histavg
rbfn+timetable mlp+histavg mlp+histavg
mlp+timetable rbfn+histavg mlp+histavg
rbfn+timetable mlp+histavg mlp+histavg
"""


class TestDispatch:
    def test_all_cells_match_published_grid(self):
        rows = PUBLISHED.split("\n")[1:-1]
        assert len(rows) == 8
        for gid, row in enumerate(rows, start=1):
            for band, cell in zip(BANDS, row.split()):
                kind, fs = DEFAULT_TABLE.cells[(LineGroup(gid), band)]
                assert f"{kind}+{fs.value}" == cell, (gid, band)

    @pytest.mark.parametrize("line,dist,expected", [("111", 3, (RBF, TT)), ("172", 10, (RBF, HA)),
                                                    ("158", 20, (MLP, HA)), ("523", 5, (MLP, TT)),
                                                    ("523", 6, (MLP, HA)), ("128", 1, (RBF, TT))])
    def test_examples(self, line, dist, expected):
        assert dispatch(DEFAULT_TABLE, line, dist) == expected

    def test_bands(self):
        np.testing.assert_array_equal(band_of([1, 5, 6, 15, 16, 27]), [1, 1, 2, 2, 3, 3])
        with pytest.raises(ValueError):
            band_of(0)

    def test_unknown_line(self):
        with pytest.raises(UnknownLine):
            dispatch(DEFAULT_TABLE, "999", 3)

    def test_file_round_trip_and_override(self, tmp_path):
        write_dispatch(tmp_path / "d.csv", DEFAULT_TABLE)
        assert dict(load_dispatch(tmp_path / "d.csv").cells) == DEFAULT_CELLS
        (tmp_path / "o.csv").write_text("group_id,band,model,feature_set\n2,<=5,rbfn,histavg\n")
        table = load_dispatch(tmp_path / "o.csv")
        assert table.cells[(LineGroup.LONG_PERIPHERY_WEST_EAST, 1)] == (RBF, HA)
        assert table.cells[(LineGroup.LONG_PERIPHERY_WEST_EAST, 2)] == (MLP, HA)

    def test_bad_file(self, tmp_path):
        (tmp_path / "b.csv").write_text("group_id,band,model,feature_set\n2,1,svm,histavg\n")
        with pytest.raises(DataError):
            load_dispatch(tmp_path / "b.csv")


@pytest.fixture(scope="module")
def hybrid_setup():
    city = generate(SynthSpec(seed=21, n_lines=8, stops_per_line=(18,), days=("2021-03-11", "2021-03-18"),
                              noise_sigma=0.2, service_start_s=7 * 3600.0, service_end_s=12 * 3600.0))
    trips = city.truth_trips()
    train = [t for t in trips if t.date == "2021-03-11"]
    test = [t for t in trips if t.date == "2021-03-18"]
    ctx = FeatureContext(timetable=city.timetable, ha_table=build_ha(train))
    registry, sets = {}, {}
    for fs in (TT, HA):
        tr = build_longdist_dataset(train, fs, ctx)
        sets[fs] = build_longdist_dataset(test, fs, ctx)
        registry[registry_key(MLP, fs, WILDCARD_LINE)] = train_model(MLP, fs, tr, MlpConfig(epochs=5))
        registry[registry_key(RBF, fs, WILDCARD_LINE)] = train_model(RBF, fs, tr, RbfnConfig(M=10))
    assert len(sets[TT]) == len(sets[HA])
    query = sets[TT].copy()
    query["ha_eta"] = sets[HA]["ha_eta"].to_numpy()
    return registry, sets, query


class TestHybridPredict:
    def test_band_boundary_switches_model(self, hybrid_setup):
        registry, _, query = hybrid_setup
        q = query[(query.line == "523") & ((query.dest_idx - query.origin_idx).isin([5, 6]))]
        _, ids = hybrid_predict(registry, DEFAULT_TABLE, q)
        dist = (q.dest_idx - q.origin_idx).to_numpy()
        assert set(ids[dist == 5]) == {"mlp+timetable@*"}
        assert set(ids[dist == 6]) == {"mlp+histavg@*"}

    def test_missing_model(self, hybrid_setup):
        registry, _, query = hybrid_setup
        partial = {k: v for k, v in registry.items() if k != registry_key(RBF, TT, WILDCARD_LINE)}
        q = query[(query.line == "111") & ((query.dest_idx - query.origin_idx) <= 5)]
        with pytest.raises(MissingModel):
            hybrid_predict(partial, DEFAULT_TABLE, q)

    def test_line_specific_model_preferred(self, hybrid_setup):
        registry, _, query = hybrid_setup
        reg = dict(registry)
        reg[registry_key(MLP, HA, "523")] = reg[registry_key(RBF, HA, WILDCARD_LINE)]
        q = query[query.line == "523"]
        _, ids = hybrid_predict(reg, DEFAULT_TABLE, q)
        assert "rbfn+histavg@523" in set(ids)

    def test_routes_rows_to_their_component(self, hybrid_setup):
        registry, sets, query = hybrid_setup
        pred, ids = hybrid_predict(registry, DEFAULT_TABLE, query)
        for key, model in registry.items():
            rows = ids == f"{model.model_id}@*"
            if rows.any():
                np.testing.assert_array_equal(pred[rows], predict(model, sets[model.feature_set][rows]))

    def _component_maes(self, registry, sets, label, mask):
        return {(m.kind, m.feature_set): mae_std(predict(m, sets[m.feature_set])[mask], label[mask])[0]
                for m in registry.values()}

    def test_default_table_within_component_range_per_cell(self, hybrid_setup):
        registry, sets, query = hybrid_setup
        pred, _ = hybrid_predict(registry, DEFAULT_TABLE, query)
        band = band_of((query.dest_idx - query.origin_idx).to_numpy())
        group = np.array([group_of(line) for line in query.line])
        label = query.label.to_numpy()
        for g in LineGroup:
            for b in BANDS:
                m = (group == g) & (band == b)
                comps = self._component_maes(registry, sets, label, m)
                assert mae_std(pred[m], label[m])[0] <= max(comps.values())

    def test_evaluation_derived_table_not_worse_per_band(self, hybrid_setup):
        registry, sets, query = hybrid_setup
        band = band_of((query.dest_idx - query.origin_idx).to_numpy())
        group = np.array([group_of(line) for line in query.line])
        label = query.label.to_numpy()
        cells = {}
        for g in LineGroup:
            for b in BANDS:
                comps = self._component_maes(registry, sets, label, (group == g) & (band == b))
                cells[(g, b)] = min(comps, key=comps.get)
        pred, _ = hybrid_predict(registry, DispatchTable(cells), query)
        for b in BANDS:
            m = band == b
            comps = self._component_maes(registry, sets, label, m)
            assert mae_std(pred[m], label[m])[0] <= min(comps.values()) + 1e-9

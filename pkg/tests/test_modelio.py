import datetime as dt

import pytest

from enscal.bma import BiasCorrection, BmaGammaModel, BmaNormalModel, BmaTruncNormalModel
from enscal.data import make_grouping
from enscal.emos import EmosModel
from enscal.errors import DataError
from enscal.modelio import dump_model, load_model, parse_fields

G = make_grouping("three_group", 11)
MODELS = [
    BmaNormalModel(G, BiasCorrection("linear", (0.1, 0.2, 0.3), (0.9, 1.0, 1.1)), (0.3, 0.08, 0.06), 1.25),
    BmaNormalModel(G, BiasCorrection.identity(3), (1 / 11,) * 3, 0.5, "crps"),
    BmaGammaModel(G, 0.2, 0.9, 0.4, 0.2, (0.3, 0.08, 0.06)),
    BmaTruncNormalModel(G, (0.0, 0.1, 0.2), (1.0, 0.95, 0.9), 0.8, (0.3, 0.08, 0.06)),
    EmosModel(G, "normal", 0.3, (0.1, 0.05, 0.04), 1.1, 0.2),
    EmosModel(G, "truncnormal", 0.3, (0.1, 0.05, 0.04), 1.1, 0.2),
]


@pytest.mark.parametrize("model", MODELS, ids=lambda m: m.kind)
def test_round_trip(model):
    text = dump_model(model, dt.date(2012, 6, 1), (dt.date(2012, 4, 1), dt.date(2012, 5, 31)))
    assert text.startswith("format_version = 1\n")
    back = load_model(text)
    assert back == model
    assert dump_model(back, dt.date(2012, 6, 1), (dt.date(2012, 4, 1), dt.date(2012, 5, 31))) == text


def test_header_fields():
    f = parse_fields(dump_model(MODELS[0], dt.date(2012, 6, 1), [dt.date(2012, 5, 1), dt.date(2012, 5, 31)]))
    assert f["kind"] == "bma_normal"
    assert f["grouping"] == "1|2,4,6,8,10|3,5,7,9,11"
    assert f["target_date"] == "2012-06-01"
    assert f["training_days"] == "2"


def test_rejects_unknown_version_and_missing_fields():
    with pytest.raises(DataError):
        load_model("format_version = 9\nkind = bma_normal\n")
    with pytest.raises(DataError):
        load_model("format_version = 1\nkind = emos_normal\ngrouping = 1|2-3\n")
    with pytest.raises(DataError):
        load_model("format_version = 1\nkind = nope\ngrouping = 1|2-3\n")
    with pytest.raises(DataError):
        parse_fields("no equals sign")

import datetime as dt
import math

import numpy as np
import pytest

from etpp.domain import (
    DataError,
    Dataset,
    EventFeatureEncoder,
    EventRecord,
    SeatMap,
    Transaction,
    destandardize,
    encode_event_features,
    fingerprint,
    fit_standardizer,
    load_events,
    load_seatmap,
    load_transactions,
    standardize,
    Standardizer,
)


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


def test_load_two_valid_rows(tmp_path):
    p = write(tmp_path / "t.csv", "event_id,row,col,dte,price\ne1,1,2,3.5,120\ne1,2,2,0,80.25\n")
    txns = load_transactions(p)
    assert txns == [Transaction("e1", 1, 2, 3.5, 120.0), Transaction("e1", 2, 2, 0.0, 80.25)]


def test_zero_price_rejected_with_line(tmp_path):
    p = write(tmp_path / "t.csv", "event_id,row,col,dte,price\ne1,1,2,3.5,120\ne1,2,2,0,0\n")
    with pytest.raises(DataError, match="line 3"):
        load_transactions(p)


def test_duplicate_sale_rejected(tmp_path):
    p = write(tmp_path / "t.csv", "event_id,row,col,dte,price\ne1,1,2,3.5,120\ne1,1,2,1,90\n")
    with pytest.raises(DataError, match=r"row=1, col=2.*'e1'"):
        load_transactions(p)


@pytest.mark.parametrize("body", [
    "e1,1,2,3.5\n",
    "e1,x,2,3.5,10\n",
    "e1,0,2,3.5,10\n",
    "e1,1,2,-1,10\n",
    "e1,1,2,nan,10\n",
])
def test_malformed_rows_located(tmp_path, body):
    p = write(tmp_path / "t.csv", "event_id,row,col,dte,price\n" + body)
    with pytest.raises(DataError, match="line 2"):
        load_transactions(p)


def test_bad_header(tmp_path):
    p = write(tmp_path / "t.csv", "event,row,col,dte,price\n")
    with pytest.raises(DataError, match="line 1"):
        load_transactions(p)


def test_load_events_and_seatmap(tmp_path):
    ev = write(tmp_path / "e.csv", "event_id,event_date,opp,stars\ne1,2019-01-02,A,3\ne2,2019-01-05,B,1\n")
    sm = write(tmp_path / "s.csv", "row,col,section\n1,1,loge\n1,2,loge\n2,1,balcony\n")
    events = load_events(ev)
    assert events[0].event_date == dt.date(2019, 1, 2)
    assert events[1].attributes == {"opp": "B", "stars": "1"}
    seat_map = load_seatmap(sm)
    assert seat_map.n == 3 and seat_map.extent == (2, 2)
    assert seat_map.index(2, 1) == 2
    with pytest.raises(DataError, match="row=5"):
        seat_map.index(5, 5)


def test_bad_event_date(tmp_path):
    ev = write(tmp_path / "e.csv", "event_id,event_date\ne1,01/02/2019\n")
    with pytest.raises(DataError, match="line 2"):
        load_events(ev)


def rec(eid, **attrs):
    return EventRecord(eid, dt.date(2020, 1, 1), attrs)


def test_one_hot_three_levels_and_numeric_passthrough():
    records = [rec("a", opp="x", stars="2.5"), rec("b", opp="y", stars="1"), rec("c", opp="z", stars="0")]
    infos, enc = encode_event_features(records)
    assert enc.q == 4
    assert enc.feature_names == ("opp=x", "opp=y", "opp=z", "stars")
    np.testing.assert_array_equal(infos[0].features, [1, 0, 0, 2.5])
    np.testing.assert_array_equal(infos[2].features, [0, 0, 1, 0.0])


def test_unseen_level_zero_vector(caplog):
    enc = EventFeatureEncoder().fit([rec("a", opp="x", stars="1"), rec("b", opp="y", stars="2")])
    info = enc.transform_one(rec("t", opp="new", stars="3"))
    np.testing.assert_array_equal(info.features, [0, 0, 3])
    assert "unseen level" in caplog.text
    assert len(info.features) == enc.q


def test_encoder_round_trip_dict():
    enc = EventFeatureEncoder().fit([rec("a", opp="x", stars="1"), rec("b", opp="y", stars="2")])
    enc2 = EventFeatureEncoder.from_dict(enc.to_dict())
    assert enc2.feature_names == enc.feature_names


def test_standardizer_cases():
    s = Standardizer(100.0, 50.0)
    assert standardize(150.0, s) == 1.0
    fitted = fit_standardizer([1.0, 2.0, 3.0])
    assert fitted.mean == 2.0
    assert fitted.stdev == pytest.approx(math.sqrt(2.0 / 3.0), rel=1e-15)


def test_standardizer_round_trip():
    rng = np.random.default_rng(0)
    x = rng.lognormal(4, 1, size=1000)
    s = fit_standardizer(x)
    np.testing.assert_allclose(destandardize(standardize(x, s), s), x, rtol=1e-12)


def test_standardizer_zero_variance():
    with pytest.raises(DataError):
        fit_standardizer([5.0, 5.0, 5.0])


def test_fingerprint_order_independent():
    a = [Transaction("e", 1, 1, 1.0, 10.0), Transaction("e", 1, 2, 2.0, 20.0)]
    assert fingerprint(a) == fingerprint(a[::-1])
    assert fingerprint(a) != fingerprint(a[:1])


def test_dataset_rejects_unknown_seat_and_event():
    sm = SeatMap(((1, 1, "loge"),))
    ev = [rec("e1")]
    with pytest.raises(DataError, match="not in the seat map"):
        Dataset([Transaction("e1", 2, 2, 1.0, 5.0)], ev, sm)
    with pytest.raises(DataError, match="unknown event"):
        Dataset([Transaction("e9", 1, 1, 1.0, 5.0)], ev, sm)


def test_dataset_round_trip(tmp_path):
    sm = SeatMap(((1, 1, "loge"), (1, 2, "balcony")))
    ev = [EventRecord("e2", dt.date(2020, 1, 3), {"k": "1"}), EventRecord("e1", dt.date(2020, 1, 1), {"k": "2"})]
    ds = Dataset([Transaction("e1", 1, 1, 0.25, 5.5)], ev, sm)
    assert ds.event_ids == ["e1", "e2"]
    ds.save(tmp_path)
    ds2 = Dataset.load(tmp_path)
    assert ds2.transactions == ds.transactions
    assert ds2.events == ds.events
    assert ds2.seat_map == ds.seat_map

import random
from datetime import datetime, timedelta

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from remtime.eventlog import (
    OTHER,
    AttributeSchema,
    AttributeSpec,
    ColumnMapping,
    ParseError,
    PreprocessConfig,
    extract_prefix_log,
    log_stats,
    make_prefix,
    parse_event_log,
    preprocess,
)
from remtime.synth import SYNTH_MAPPING, Pattern, generate_log, generate_rows, rows_to_csv

from conftest import CLAIMS_CSV, CLAIMS_MAPPING, CLAIMS_SCHEMA


def test_parse_claims(claims_log):
    assert [t.case_id for t in claims_log.traces] == ["1", "2"]
    assert [len(t) for t in claims_log.traces] == [6, 4]
    case1 = claims_log.traces[0]
    assert case1.activities == ("A", "B", "D", "F", "G", "H")
    assert case1.events[0].case_attrs == {"Channel": "Email", "Age": 37.0}
    assert case1.events[0].event_attrs == {"Resource": "John", "Cost": 15.0}
    assert case1.events[0].timestamp == datetime(2017, 1, 1, 9, 13)
    assert claims_log.traces[1].activities == ("A", "D", "B", "F")


def test_parse_header_only():
    log = parse_event_log("Case,Activity,Time,Channel,Age,Resource,Cost\n", CLAIMS_MAPPING, CLAIMS_SCHEMA)
    assert log.traces == ()


def test_parse_is_order_invariant(claims_log):
    lines = CLAIMS_CSV.read_text().splitlines()
    # swap case 2's B and D rows
    i_d = next(i for i, l in enumerate(lines) if l.startswith("2,") and ",D," in l)
    i_b = next(i for i, l in enumerate(lines) if l.startswith("2,") and ",B," in l)
    lines[i_d], lines[i_b] = lines[i_b], lines[i_d]
    swapped = parse_event_log("\n".join(lines) + "\n", CLAIMS_MAPPING, CLAIMS_SCHEMA)
    assert swapped == claims_log

    body = lines[1:]
    random.Random(3).shuffle(body)
    shuffled = parse_event_log("\n".join([lines[0]] + body) + "\n", CLAIMS_MAPPING, CLAIMS_SCHEMA)
    assert shuffled == claims_log


def test_equal_timestamps_keep_file_order():
    text = "case_id,activity,timestamp\nc,X,2020-01-01 00:00:00\nc,Y,2020-01-01 00:00:00\nc,Z,2019-12-31 00:00:00\n"
    log = parse_event_log(text, SYNTH_MAPPING)
    assert log.traces[0].activities == ("Z", "X", "Y")


def test_missing_column_is_fatal():
    with pytest.raises(ParseError, match="Cost"):
        parse_event_log("Case,Activity,Time,Channel,Age,Resource\n", CLAIMS_MAPPING, CLAIMS_SCHEMA)


def test_bad_timestamp_reports_row():
    text = "case_id,activity,timestamp\nc,A,2020-01-01 00:00:00\nc,B,yesterday\n"
    with pytest.raises(ParseError, match="row 3"):
        parse_event_log(text, SYNTH_MAPPING)


def test_bad_numeric_becomes_missing():
    schema = AttributeSchema((AttributeSpec("cost", "numeric"),))
    text = "case_id,activity,timestamp,cost\nc,A,2020-01-01 00:00:00,12\nc,B,2020-01-01 00:01:00,abc\n"
    log = parse_event_log(text, SYNTH_MAPPING, schema)
    assert [e.event_attrs["cost"] for e in log.traces[0].events] == [12.0, None]
    assert log.numeric_parse_failures == 1


def test_case_attrs_shared_within_trace():
    schema = AttributeSchema((AttributeSpec("channel", "categorical", static=True),))
    text = ("case_id,activity,timestamp,channel\n"
            "c,B,2020-01-01 00:01:00,Phone\nc,A,2020-01-01 00:00:00,Email\n")
    trace = parse_event_log(text, SYNTH_MAPPING, schema).traces[0]
    assert {e.case_attrs["channel"] for e in trace.events} == {"Email"}


def test_time_features_claims(claims_log):
    log = preprocess(claims_log)
    t_start = [[e.event_attrs["t_start"] for e in t.events] for t in log.traces]
    assert t_start == [[0, 80, 180, 305, 350, 360], [0, 300, 57900, 58010]]
    case2 = log.traces[1].events
    assert [e.event_attrs["t_prev"] for e in case2] == [0, 300, 57600, 110]
    # 2 January 2017 was a Monday
    assert case2[0].event_attrs["weekday"] == 0 and case2[0].event_attrs["hour"] == 16


def test_preprocess_defaults_on_claims(claims_log):
    log = preprocess(claims_log)
    # Channel is constant; every resource occurs in fewer than 10 cases -> 'other' -> constant
    assert "Channel" not in log.schema.names
    assert "Resource" not in log.schema.names
    assert "Channel" not in log.traces[0].events[0].case_attrs
    assert {"Age", "Cost", "t_start"} <= set(log.schema.names)


def test_rare_values_counted_in_cases():
    rows = []
    for c in range(12):
        rows.append({"case_id": f"c{c:02d}", "activity": "A", "timestamp": "2020-01-01 00:00:00",
                     "res": "common" if c < 10 else "rare"})
        # the rare value occurs in many events but few cases
        for j in range(5):
            rows.append({"case_id": f"c{c:02d}", "activity": "B", "timestamp": f"2020-01-01 00:0{j + 1}:00",
                         "res": "rare" if c >= 10 else "common"})
    schema = AttributeSchema((AttributeSpec("res", "categorical"),))
    log = preprocess(parse_event_log(rows_to_csv(rows), SYNTH_MAPPING, schema))
    values = {e.event_attrs["res"] for t in log.traces for e in t.events}
    assert values == {"common", OTHER}


def test_incomplete_cases_dropped():
    log = generate_log(10, [Pattern(("A", "Send Fine"), 10), Pattern(("A", "Pay"), 10)], seed=2)
    out = preprocess(log, PreprocessConfig(incomplete_markers=("Send Fine",)))
    assert all(t.activities[-1] == "Pay" for t in out.traces)
    assert len(out) == sum(t.activities[-1] == "Pay" for t in log.traces)


def test_preprocess_idempotent():
    log = generate_log(40, [Pattern(("A", "B", "C"), 100), Pattern(("A", "D"), 5000, 0.2)],
                       noise=0.5, seed=4, resources=("x", "y", "z"))
    once = preprocess(log)
    assert preprocess(once) == once


def test_prefix_counts():
    log = generate_log(3, [Pattern(("A", "B", "C"), 10)])
    prefixes = extract_prefix_log(log)
    assert [(p.case_id, p.k) for p in prefixes] == [(c, k) for c in ("c0", "c1", "c2") for k in (1, 2)]
    single = generate_log(2, [Pattern(("A",), 10)])
    assert extract_prefix_log(single) == []


def test_prefix_labels_claims(claims_log):
    prefixes = [p for p in extract_prefix_log(claims_log) if p.case_id == "1"]
    assert len(prefixes) == 5
    assert prefixes[0].remaining_seconds == 360
    assert [p.elapsed_seconds for p in prefixes] == [0, 80, 180, 305, 350]
    full = make_prefix(claims_log.traces[0], 6)
    assert full.remaining_seconds == 0


@settings(max_examples=40, deadline=None)
@given(lengths=st.lists(st.integers(1, 30), min_size=1, max_size=20),
       gaps=st.lists(st.integers(0, 10_000), min_size=30, max_size=30),
       max_prefix=st.integers(1, 25))
def test_prefix_log_properties(lengths, gaps, max_prefix):
    rows = []
    t0 = datetime(2021, 3, 1)
    for c, n in enumerate(lengths):
        t = t0 + timedelta(days=c)
        for i in range(n):
            t += timedelta(seconds=gaps[i])
            rows.append({"case_id": f"c{c:03d}", "activity": f"a{i % 3}", "timestamp": f"{t:%Y-%m-%d %H:%M:%S}"})
    log = parse_event_log(rows_to_csv(rows), SYNTH_MAPPING)
    prefixes = extract_prefix_log(log, max_prefix)
    assert len(prefixes) == sum(min(n - 1, max_prefix) for n in lengths)
    duration = {t.case_id: t.duration_seconds for t in log.traces}
    by_case = {}
    for p in prefixes:
        assert 1 <= p.k <= max_prefix
        assert p.remaining_seconds >= 0 and p.elapsed_seconds >= 0
        assert p.remaining_seconds + p.elapsed_seconds == duration[p.case_id]
        by_case.setdefault(p.case_id, []).append(p.remaining_seconds)
    for rem in by_case.values():
        assert all(a >= b for a, b in zip(rem, rem[1:]))


def test_log_stats_homogeneous():
    log = generate_log(4, [Pattern(("A", "B"), 60)])
    s = log_stats(log)
    assert s.distinct_trace_ratio == 0.25
    assert s.mean_distinct_event_ratio == 1.0
    assert s.mean_case_length == 2
    assert s.cv_case_length == 0


def test_log_stats_claims(claims_log):
    # oracle: enumerated by hand from the two traces ABDFGH and ADBF
    s = log_stats(claims_log)
    assert s.n_cases == 2
    assert s.n_event_classes == 6
    assert s.distinct_trace_ratio == 1.0
    assert s.mean_distinct_event_ratio == 1.0
    assert s.mean_case_length == 5.0
    assert s.cv_case_length == pytest.approx(1 / 5)
    assert s.mean_case_duration_days == pytest.approx((360 + 58010) / 2 / 86400)


def test_log_stats_duration_cv():
    text = ("case_id,activity,timestamp\n"
            "a,X,2020-01-01 00:00:00\na,Y,2020-01-02 00:00:00\n"
            "b,X,2020-01-01 00:00:00\nb,Y,2020-01-04 00:00:00\n")
    s = log_stats(parse_event_log(text, SYNTH_MAPPING))
    assert s.mean_case_duration_days == pytest.approx(2.0)
    assert s.cv_case_duration == pytest.approx(0.5)


def test_log_stats_der_counts_repeats():
    text = ("case_id,activity,timestamp\n"
            "a,X,2020-01-01 00:00:00\na,X,2020-01-01 00:01:00\na,Y,2020-01-01 00:02:00\na,Y,2020-01-01 00:03:00\n")
    assert log_stats(parse_event_log(text, SYNTH_MAPPING)).mean_distinct_event_ratio == 0.5


def test_log_stats_empty():
    with pytest.raises(ValueError, match="no cases"):
        log_stats(parse_event_log("case_id,activity,timestamp\n", SYNTH_MAPPING))


def test_generate_rows_deterministic():
    p = [Pattern(("A", "B"), 100), Pattern(("C", "D", "E"), 10)]
    assert generate_rows(20, p, noise=0.3, seed=9) == generate_rows(20, p, noise=0.3, seed=9)
    assert Pattern.parse("A,B,C:250:2") == Pattern(("A", "B", "C"), 250.0, 2.0)

import pytest

from fuzzeval.data_model import Dataset, TrialRecord
from fuzzeval.synth import paper_shaped_fixture


def make_dataset(programs, fuzzers, trials, performance, properties=None):
    """Small balanced dataset builder.

    ``performance[(program, trial, fuzzer)]`` -> value;
    ``properties[(program, trial)]`` -> dict of property values.
    """
    records = []
    for program in programs:
        for trial in range(trials):
            props = (properties or {}).get((program, trial), {})
            for fuzzer in fuzzers:
                records.append(TrialRecord(
                    program=program,
                    fuzzer=fuzzer,
                    trial=trial,
                    performance=performance[(program, trial, fuzzer)],
                    properties=dict(props),
                ))
    return Dataset(records)


@pytest.fixture(scope="session")
def paper_dataset():
    return paper_shaped_fixture()

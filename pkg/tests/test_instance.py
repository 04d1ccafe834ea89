import json
from dataclasses import replace

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from prodplan.instance import (Cluster, GeneratorParams, InstanceError, ProblemInstance, Resource, Task,
                               default_virtual_copies, dumps_instance, generate_instance, instance_to_dict,
                               load_instance, loads_instance, save_instance, validate_instance)


def test_generator_defaults_match_benchmark_recipe():
    inst = generate_instance(6, 11)
    assert len(inst.clusters) == 1 and len(inst.resources) == 1
    assert inst.num_tasks == 6
    res = inst.resources[0]
    assert (res.capacity, res.setup_time, res.processing_time) == (20, 0, 1)
    assert all(1 <= t.weight <= 10 and 3 <= t.due_date <= 30 for t in inst.clusters[0].tasks)
    assert validate_instance(inst).ok


def test_single_task_instance():
    inst = generate_instance(1, 0)
    assert inst.virtual_copies == ((1,),)
    assert validate_instance(inst).ok


def test_generation_is_deterministic():
    assert dumps_instance(generate_instance(10, 7)) == dumps_instance(generate_instance(10, 7))
    assert dumps_instance(generate_instance(10, 7)) != dumps_instance(generate_instance(10, 8))


def test_default_virtual_copies():
    # 4 tasks, total 33: ceil(33/20) + 2 = 4, capped at N = 4
    assert default_virtual_copies(4, 33, 20) == 4
    assert default_virtual_copies(12, 66, 20) == 6
    inst = generate_instance(8, 3, GeneratorParams(virtual_copies="max"))
    assert inst.virtual_copies == ((8,),)


@pytest.mark.parametrize("params", [GeneratorParams(weight_range=(5, 2)), GeneratorParams(due_range=(9, 3))])
def test_generator_rejects_inverted_ranges(params):
    with pytest.raises(InstanceError, match="low .* > high"):
        generate_instance(4, 0, params)


def test_generator_rejects_empty():
    with pytest.raises(InstanceError):
        generate_instance(0, 0)


def _inst(weights, capacity=20, copies=None, dues=None):
    dues = dues or [5] * len(weights)
    tasks = tuple(Task(0, i, w, d) for i, (w, d) in enumerate(zip(weights, dues)))
    return ProblemInstance((Cluster(0, tasks),), (Resource(0, capacity),), ((copies or len(weights),),))


def test_validation_names_oversized_task():
    rep = validate_instance(_inst([25, 3]))
    assert "task-exceeds-capacity" in rep.codes()
    msg = str(rep)
    assert "(0, 0)" in msg and "25" in msg and "20" in msg


def test_validation_flags_provably_infeasible_allocation():
    rep = validate_instance(_inst([10, 10, 10, 10, 10], copies=2))
    assert rep.codes() == ["infeasible-allocation"]
    assert "provably infeasible allocation" in str(rep) and "50 > available capacity 40" in str(rep)


def test_validation_reports_every_violation():
    tasks = (Task(0, 0, 0, 0), Task(0, 0, 3, 4))
    inst = ProblemInstance((Cluster(0, tasks),), (Resource(0, 20, -1, 0),), ((3,),))
    codes = set(validate_instance(inst).codes())
    assert {"bad-weight", "bad-due-date", "duplicate-task", "bad-setup", "bad-processing",
            "bad-virtual-copies"} <= codes


def test_validation_checks_copy_table_shape():
    inst = replace(_inst([3, 4]), virtual_copies=((1, 1),))
    assert validate_instance(inst).codes() == ["bad-virtual-copies"]


def test_round_trip(tmp_path):
    inst = generate_instance(9, 123)
    path = tmp_path / "inst.json"
    save_instance(inst, path)
    assert load_instance(path) == inst


def test_parse_error_cites_field():
    doc = instance_to_dict(generate_instance(3, 1))
    doc["clusters"][0]["tasks"][2]["weight"] = -4
    with pytest.raises(InstanceError, match=r"clusters\[0\]\.tasks\[2\]\.weight: must be >= 1"):
        loads_instance(json.dumps(doc))


def test_missing_resources_is_schema_error():
    doc = instance_to_dict(generate_instance(3, 1))
    del doc["resources"]
    with pytest.raises(InstanceError, match="missing required field `resources`"):
        loads_instance(json.dumps(doc))


def test_malformed_json_names_line():
    text = dumps_instance(generate_instance(2, 0)).replace('"seed"', "seed", 1)
    with pytest.raises(InstanceError, match="line 4"):
        loads_instance(text)


def test_schema_version_mismatch():
    doc = instance_to_dict(generate_instance(2, 0))
    doc["schema_version"] = 99
    with pytest.raises(InstanceError, match="schema_version mismatch"):
        loads_instance(json.dumps(doc))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 15), seed=st.integers(0, 2**32 - 1),
       lo=st.integers(1, 8), span=st.integers(0, 10), cap=st.integers(18, 40))
def test_generated_instances_respect_ranges_and_round_trip(n, seed, lo, span, cap):
    params = GeneratorParams(weight_range=(lo, lo + span), due_range=(3, 30), capacity=cap)
    inst = generate_instance(n, seed, params)
    tasks = inst.clusters[0].tasks
    assert len(tasks) == n
    assert all(lo <= t.weight <= lo + span and 3 <= t.due_date <= 30 for t in tasks)
    assert validate_instance(inst).ok
    assert loads_instance(dumps_instance(inst)) == inst

import pytest

from pekerisrefocus.errors import StepTooLarge, WorkerFailure
from pekerisrefocus.process import run_tasks


def square(x):
    return x * x


def fail_on_three(x):
    if x == 3:
        a_local_variable = 'divide by zero ahead'
        return a_local_variable, x / 0
    return x


def step_too_large(x):
    raise StepTooLarge('h * rate = %g' % x)


def test_inline_and_pooled_results_agree():
    tasks = list(range(10))
    assert run_tasks(square, tasks) == [t * t for t in tasks]
    assert run_tasks(square, tasks, threads=3) == [t * t for t in tasks]


def test_empty_task_list():
    assert run_tasks(square, [], threads=4) == []


def test_worker_failure_carries_traceback():
    with pytest.raises(WorkerFailure) as info:
        run_tasks(fail_on_three, range(6), threads=2)
    payload = info.value.payload
    assert payload['Error Type'] == 'ZeroDivisionError'
    assert payload['Task'] == 3
    assert payload['Process'].startswith('worker-')
    innermost = payload['Traceback'][-1]
    assert innermost['Module'] == 'fail_on_three'
    assert 'a_local_variable' in dict(innermost['Local Variables'])


def test_worker_failure_keeps_provenance():
    with pytest.raises(WorkerFailure) as info:
        run_tasks(step_too_large, [0.7, 0.9], threads=2)
    assert info.value.payload['Module'] == 'montecarlo'
    assert info.value.module == 'montecarlo'
    assert info.value.operation == 'integrate_transfer'


def test_inline_errors_propagate_unchanged():
    with pytest.raises(ZeroDivisionError):
        run_tasks(fail_on_three, range(6), threads=1)

import math
import threading
import time

import pytest

from sqglab import runner
from sqglab.diagnostics import CheckResult, CheckStatus
from sqglab.exception import CheckError


def _job(name, delay=0.0, status=CheckStatus.PASS):
    def job():
        time.sleep(delay)
        return CheckResult(name, status, 0.0, 1.0, name)
    return job


def _boom():
    raise CheckError('no snapshots in window')


@pytest.mark.asyncio
async def test_results_keep_job_order():
    jobs = [('slow', _job('slow', 0.05)), ('fast', _job('fast'))]
    results = await runner.run_checks(jobs, threads=2)
    assert [result.name for result, _ in results] == ['slow', 'fast']
    assert all(seconds >= 0 for _, seconds in results)


@pytest.mark.asyncio
async def test_raising_job_fails():
    results = await runner.run_checks([('boom', _boom), ('ok', _job('ok'))])
    failed, _ = results[0]
    assert failed.status == CheckStatus.FAIL
    assert math.isnan(failed.residual)
    assert 'CheckError' in failed.details['error']
    assert results[1][0].status == CheckStatus.PASS


@pytest.mark.asyncio
async def test_list_results_are_flattened():
    def pair():
        return [CheckResult('a', CheckStatus.PASS, 0.0, 1.0, 'a'),
                CheckResult('b', CheckStatus.INCONCLUSIVE, 0.0, 1.0, 'b')]
    report = await runner.collect_report([('pair', pair)], provenance={'source': 'test'})
    assert [result.name for result in report] == ['a', 'b']
    assert report.passed


@pytest.mark.asyncio
async def test_jobs_share_the_pool():
    barrier = threading.Barrier(2, timeout=5)

    def waiting(name):
        def job():
            barrier.wait()
            return CheckResult(name, CheckStatus.PASS, 0.0, 1.0, name)
        return job

    report = await runner.collect_report([('x', waiting('x')), ('y', waiting('y'))], threads=2)
    assert report.passed
    assert len(report) == 2


def test_as_results():
    single = CheckResult('a', CheckStatus.PASS, 0.0, 1.0, 'a')
    assert runner.as_results(single) == [single]
    assert runner.as_results([single, single]) == [single, single]

"""Runs named check jobs on a thread pool from asyncio"""
import asyncio
import concurrent.futures
import logging
import math
import time

from sqglab import diagnostics


logger = logging.getLogger(__name__)
log_debug = logger.debug
log_info = logger.info
log_warning = logger.warning
log_error = logger.error


def _failed(name, error):
    return diagnostics.CheckResult(
        name, diagnostics.CheckStatus.FAIL, math.nan, math.nan, 'check raised',
        details={'error': '{}: {}'.format(type(error).__name__, error)})


def as_results(result):
    """Jobs may return one result or a list of them"""
    return result if isinstance(result, list) else [result]


def _timed(name, job):
    start = time.perf_counter()
    try:
        result = job()
    except Exception as e:
        log_error("Check '{}' raised {}".format(name, e))
        result = _failed(name, e)
    elapsed = time.perf_counter() - start
    log_debug("Check '{}' done in {:.3f}s".format(name, elapsed))
    return result, elapsed


async def run_checks(jobs, *, loop=None, threads=1):
    """
    Run (name, callable) jobs concurrently and return [(result, seconds)] in job
    order. A job raising becomes a failed result.
    """
    if loop is None:
        loop = asyncio.get_event_loop()
    with concurrent.futures.ThreadPoolExecutor(max_workers=max(1, threads)) as executor:
        futures = [loop.run_in_executor(executor, _timed, name, job) for name, job in jobs]
        results = await asyncio.gather(*futures)
    for result, _ in results:
        for item in as_results(result):
            log_info("Check '{}': {}".format(item.name, item.status.name.lower()))
    return results


async def collect_report(jobs, *, loop=None, threads=1, provenance=None):
    report = diagnostics.DiagnosticsReport(provenance)
    for result, _ in await run_checks(jobs, loop=loop, threads=threads):
        for item in as_results(result):
            report.add(item)
    return report

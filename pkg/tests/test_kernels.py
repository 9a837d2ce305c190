"""Flow-line kernel against an independent event-driven simulator."""

import heapq
import math
import os
import subprocess
import sys

import numpy as np
import pytest

from parsel import kernels
from parsel._accel import HAVE_NUMBA
from parsel.rng import Stream, stream_key


def event_driven_departures(x, u, n_jobs):
    """Departure epochs from station 3 using a future-event list.

    Job ``n`` draws its service time at station ``s`` (0-based) from
    ``u[3n + s]``.  Station capacities count the job in service; a job that
    finishes in front of a full station stays on its server (blocking).
    """
    r1, r2, r3, b2, b3 = x
    rates = (r1, r2, r3)
    caps = (None, b2, b3)

    def service(n, s):
        return -math.log1p(-u[3 * n + s]) / rates[s]

    queues = [[0], [], []]  # jobs at each station, head in service
    blocked = [False, False, False]
    next_job = 1
    events = [(service(0, 0), 0)]
    departures = []

    def start(s, t):
        heapq.heappush(events, (t + service(queues[s][0], s), s))

    def push_into(s, job, t):
        queues[s].append(job)
        if len(queues[s]) == 1:
            start(s, t)

    def release(s, t):
        # station s just freed a slot; pull a blocked job from upstream
        nonlocal next_job
        up = s - 1
        if up < 0 or not blocked[up]:
            return
        blocked[up] = False
        job = queues[up].pop(0)
        push_into(s, job, t)
        if up == 0:
            queues[0].append(next_job)
            next_job += 1
            start(0, t)
        else:
            if queues[up]:
                start(up, t)
            release(up, t)

    while len(departures) < n_jobs:
        t, s = heapq.heappop(events)
        if s == 2:
            queues[2].pop(0)
            departures.append(t)
            if queues[2]:
                start(2, t)
            release(2, t)
            continue
        nxt = s + 1
        if len(queues[nxt]) >= caps[nxt]:
            blocked[s] = True
            continue
        job = queues[s].pop(0)
        push_into(nxt, job, t)
        if s == 0:
            queues[0].append(next_job)
            next_job += 1
            start(0, t)
        else:
            if queues[s]:
                start(s, t)
            release(s, t)
    return np.array(departures)


SYSTEMS = [(1, 1, 1, 1, 1), (3, 5, 12, 1, 19), (6, 7, 7, 10, 10), (9, 2, 9, 4, 2), (1, 8, 2, 17, 3)]


@pytest.mark.parametrize("x", SYSTEMS)
@pytest.mark.parametrize("backend", ["numba", "numpy"])
def test_kernel_matches_event_driven(x, backend):
    if backend == "numba" and not HAVE_NUMBA:
        pytest.skip("numba not installed")
    warm, obs = 40, 25
    key = stream_key(5, 17, 3)
    got = kernels.flowline_batch(key, 2, 4, x[:3], x[3:], np.full(4, warm), obs, backend=backend)
    for j in range(4):
        # station 1 keeps starting jobs past the window; extra draws are unused by the kernel
        u = Stream(key, 2 + j).uniforms(3 * (warm + obs + sum(x[3:]) + 3))
        d = event_driven_departures(x, u, warm + obs)
        start = d[warm - 1]
        want = obs / (d[-1] - start)
        assert got[j] == pytest.approx(want, rel=1e-12)


def test_backends_bit_identical():
    if not HAVE_NUMBA:
        pytest.skip("numba not installed")
    key = stream_key(99, 3, 1)
    warm = np.array([1, 5, 300, 2000, 7, 64, 65, 129] * 10)
    for x in SYSTEMS:
        a = kernels.flowline_batch(key, 0, len(warm), x[:3], x[3:], warm, 50, backend="numba")
        b = kernels.flowline_batch(key, 0, len(warm), x[:3], x[3:], warm, 50, backend="numpy")
        assert np.array_equal(a, b)


def test_uniforms_match_streams_and_backends():
    key = stream_key(2**64 - 5, 2**32 - 1, 7)
    counts = np.array([5, 9, 1, 0])
    for backend in (["numba"] if HAVE_NUMBA else []) + ["numpy"]:
        m = kernels.uniforms(key, 3, counts, backend=backend)
        for j, n in enumerate(counts):
            assert np.array_equal(m[j, :n], Stream(key, 3 + j).uniforms(n))


def test_disable_numba_env_selects_numpy():
    code = "import parsel.kernels as k; print(k.BACKEND)"
    env = dict(os.environ, PARSEL_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numpy"
    env["PARSEL_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == ("numba" if HAVE_NUMBA else "numpy")

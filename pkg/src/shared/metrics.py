import os
import time

from prometheus_client import CollectorRegistry, Counter, Histogram, write_to_textfile

# Dedicated registry so repeated experiments in one process never collide with
# the default global registry.
REGISTRY = CollectorRegistry()

SAMPLES_GENERATED = Counter(
    'mlmc_samples_generated_total',
    'Total number of coupled samples generated',
    ['sampler', 'level'],
    registry=REGISTRY
)

RUNS_TOTAL = Counter(
    'mlmc_runs_total',
    'Total number of algorithm runs',
    ['algorithm', 'status'],
    registry=REGISTRY
)

RUN_DURATION = Histogram(
    'mlmc_run_duration_seconds',
    'Wall time of one algorithm run in seconds',
    ['algorithm'],
    registry=REGISTRY
)

VARIANCE_CLAMPED = Counter(
    'mlmc_variance_clamped_total',
    'Number of negative round-off quadratic forms clamped to the floor',
    ['where'],
    registry=REGISTRY
)

RATE_FIT_FALLBACKS = Counter(
    'mlmc_rate_fit_fallbacks_total',
    'Number of rate fits that fell back to the prior mode',
    registry=REGISTRY
)


def record_samples(sampler: str, level: int, count: int) -> None:
    """Record a batch of generated samples"""
    SAMPLES_GENERATED.labels(sampler=sampler, level=str(level)).inc(count)


def record_run(algorithm: str, status: str) -> None:
    RUNS_TOTAL.labels(algorithm=algorithm, status=status).inc()


def run_timer(algorithm):
    """Context manager for timing one algorithm run"""
    class RunTimer:
        def __init__(self, algorithm):
            self.algorithm = algorithm
            self.start_time = None
            self.elapsed = 0.0

        def __enter__(self):
            self.start_time = time.perf_counter()
            return self

        def __exit__(self, exc_type, exc_val, exc_tb):
            self.elapsed = time.perf_counter() - self.start_time
            RUN_DURATION.labels(algorithm=self.algorithm).observe(self.elapsed)

    return RunTimer(algorithm)


def write_metrics(output_dir: str) -> str:
    """Dump the registry in the Prometheus text format next to the results"""
    path = os.path.join(output_dir, 'metrics.prom')
    write_to_textfile(path, REGISTRY)
    return path

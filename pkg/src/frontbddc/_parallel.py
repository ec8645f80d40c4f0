from concurrent.futures import ThreadPoolExecutor


def pmap(fn, items, n_jobs=None):
    """Ordered map over subdomains; threads when ``n_jobs`` is not None/1 (-1: one per CPU)."""
    if n_jobs is None or n_jobs == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=None if n_jobs < 0 else n_jobs) as pool:
        return list(pool.map(fn, items))

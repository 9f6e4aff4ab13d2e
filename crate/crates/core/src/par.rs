//! Minimal indexed parallel map. Results are ordered by input index, so the
//! output is identical to the sequential path regardless of scheduling.

use alloc::vec::Vec;

#[cfg(feature = "std")]
pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(usize, &T) -> R + Sync,
{
    let threads = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(items.len().max(1));
    if threads <= 1 || items.len() <= 1 {
        return items.iter().enumerate().map(|(i, t)| f(i, t)).collect();
    }
    let mut out: Vec<Option<R>> = (0..items.len()).map(|_| None).collect();
    let chunk = items.len().div_ceil(threads);
    std::thread::scope(|scope| {
        for (slot_chunk, idx) in out.chunks_mut(chunk).zip(0..) {
            let f = &f;
            let base = idx * chunk;
            scope.spawn(move || {
                for (off, slot) in slot_chunk.iter_mut().enumerate() {
                    *slot = Some(f(base + off, &items[base + off]));
                }
            });
        }
    });
    out.into_iter().map(|r| r.expect("worker filled slot")).collect()
}

#[cfg(not(feature = "std"))]
pub(crate) fn par_map<T, R, F>(items: &[T], f: F) -> Vec<R>
where
    F: Fn(usize, &T) -> R,
{
    items.iter().enumerate().map(|(i, t)| f(i, t)).collect()
}

/// Runs one closure per element of `jobs`, in parallel under `std`.
/// Each closure owns disjoint state; outputs are collected in job order.
#[cfg(feature = "std")]
pub(crate) fn par_run<R, F>(jobs: Vec<F>) -> Vec<R>
where
    R: Send,
    F: FnOnce() -> R + Send,
{
    let mut out: Vec<Option<R>> = (0..jobs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (slot, job) in out.iter_mut().zip(jobs) {
            scope.spawn(move || {
                *slot = Some(job());
            });
        }
    });
    out.into_iter().map(|r| r.expect("worker filled slot")).collect()
}

#[cfg(not(feature = "std"))]
pub(crate) fn par_run<R, F>(jobs: Vec<F>) -> Vec<R>
where
    F: FnOnce() -> R,
{
    jobs.into_iter().map(|job| job()).collect()
}

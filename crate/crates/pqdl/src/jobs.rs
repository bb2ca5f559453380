//! Bounded worker pool for independent experiment tasks.
//!
//! Tasks are keyed; results come back sorted by key, so output files do not
//! depend on the worker count. Each task is internally single-threaded.

use std::sync::Mutex;

use crate::error::Result;

type Task<'a, T> = Box<dyn FnOnce() -> Result<T> + Send + 'a>;

/// Runs the tasks on up to `jobs` threads and returns the results in key
/// order. The first error wins (remaining queued tasks are skipped).
pub fn run_keyed<'a, K, T>(jobs: usize, tasks: Vec<(K, Task<'a, T>)>) -> Result<Vec<(K, T)>>
where
    K: Ord + Send,
    T: Send,
{
    let jobs = jobs.max(1).min(tasks.len().max(1));
    if jobs == 1 {
        let mut out = Vec::with_capacity(tasks.len());
        for (key, task) in tasks {
            out.push((key, task()?));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        return Ok(out);
    }

    struct Shared<'a, K, T> {
        queue: Mutex<Vec<(K, Task<'a, T>)>>,
        results: Mutex<Vec<(K, T)>>,
        failed: Mutex<Option<crate::error::Error>>,
    }
    let shared = Shared {
        queue: Mutex::new(tasks.into_iter().rev().collect()),
        results: Mutex::new(Vec::new()),
        failed: Mutex::new(None),
    };

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                if shared.failed.lock().unwrap().is_some() {
                    return;
                }
                let next = shared.queue.lock().unwrap().pop();
                let Some((key, task)) = next else { return };
                match task() {
                    Ok(value) => shared.results.lock().unwrap().push((key, value)),
                    Err(e) => {
                        let mut failed = shared.failed.lock().unwrap();
                        if failed.is_none() {
                            *failed = Some(e);
                        }
                        return;
                    }
                }
            });
        }
    });

    if let Some(e) = shared.failed.into_inner().unwrap() {
        return Err(e);
    }
    let mut results = shared.results.into_inner().unwrap();
    results.sort_by(|a, b| a.0.cmp(&b.0));
    Ok(results)
}

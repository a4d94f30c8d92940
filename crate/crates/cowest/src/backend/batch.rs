//! Bounded-concurrency batch execution. Results always come back in request
//! order no matter how the scheduler interleaves completions.

use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use super::{BackendError, Completion, GenerationRequest, Generator};

/// Runs every request through the generator with at most `max_in_flight`
/// outstanding at once. Per-request failures land in their result slot; the
/// whole batch aborts only when the cache itself fails (disk-level io), since
/// continuing would burn budget on work that can never be recorded.
pub fn run_batch(
    generator: &Generator,
    requests: &[GenerationRequest],
    max_in_flight: usize,
) -> Result<Vec<Result<Completion, BackendError>>, BackendError> {
    let workers = max_in_flight.max(1).min(requests.len().max(1));
    let next = AtomicUsize::new(0);
    let abort = AtomicBool::new(false);
    let abort_detail: Mutex<Option<String>> = Mutex::new(None);
    let slots: Vec<Mutex<Option<Result<Completion, BackendError>>>> =
        requests.iter().map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if abort.load(Ordering::SeqCst) {
                    return;
                }
                let idx = next.fetch_add(1, Ordering::SeqCst);
                let Some(request) = requests.get(idx) else { return };
                let result = generator.generate(request);
                if let Err(BackendError::Io { path, source }) = &result {
                    abort.store(true, Ordering::SeqCst);
                    let mut detail = abort_detail.lock().unwrap();
                    detail.get_or_insert_with(|| format!("cache io at {}: {source}", path.display()));
                    return;
                }
                *slots[idx].lock().unwrap() = Some(result);
            });
        }
    });

    if abort.load(Ordering::SeqCst) {
        let detail = abort_detail.lock().unwrap().take().unwrap_or_else(|| "cache io".into());
        return Err(BackendError::BatchAborted { detail });
    }
    Ok(slots
        .into_iter()
        .map(|slot| {
            slot.into_inner()
                .unwrap()
                .expect("every non-aborted slot is filled")
        })
        .collect())
}

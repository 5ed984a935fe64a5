//! Order-preserving parallel map over scoped threads.

/// Applies `f` to every item using up to `jobs` worker threads; results keep
/// the input order, so output never depends on scheduling.
pub fn parallel_map<T, R, F>(items: &[T], jobs: usize, f: F) -> Vec<R>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> R + Sync,
{
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                s.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("worker panicked"))
            .collect()
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matches_serial_order() {
        let xs: Vec<u64> = (0..37).collect();
        for jobs in [1, 2, 5, 64] {
            assert_eq!(
                parallel_map(&xs, jobs, |x| x * x),
                xs.iter().map(|x| x * x).collect::<Vec<_>>()
            );
        }
        assert!(parallel_map(&Vec::<u8>::new(), 4, |x| *x).is_empty());
    }
}

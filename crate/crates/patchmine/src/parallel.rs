//! Row-partitioned parallelism for the compute kernels.
//!
//! Every kernel that goes through here computes each output row
//! independently with a fixed per-row summation order, so results are
//! bit-identical no matter how rows are split across threads. The
//! `PATCHMINE_THREADS` environment variable caps the worker count
//! (0 or unset means auto-detect).

/// Number of threads the kernels may use.
pub fn thread_budget() -> usize {
    let auto = || {
        std::thread::available_parallelism()
            .map(|n| n.get())
            .unwrap_or(1)
    };
    match std::env::var("PATCHMINE_THREADS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(0) | Err(_) => auto(),
            Ok(n) => n,
        },
        Err(_) => auto(),
    }
}

// Below this many rows the spawn overhead dominates.
const MIN_ROWS_PER_THREAD: usize = 16;

/// Splits `out` into contiguous chunks of whole rows (`row_len` elements
/// each) and runs `fill(first_row, chunk)` on every chunk, possibly on
/// worker threads. `fill` must write each row of its chunk from the row
/// index alone.
pub(crate) fn fill_rows<F>(out: &mut [f64], row_len: usize, fill: F)
where
    F: Fn(usize, &mut [f64]) + Sync,
{
    assert!(row_len > 0 && out.len().is_multiple_of(row_len));
    let rows = out.len() / row_len;
    let budget = thread_budget();
    let workers = budget.min(rows / MIN_ROWS_PER_THREAD.max(1)).max(1);

    if workers <= 1 {
        fill(0, out);
        return;
    }

    let rows_per_chunk = rows.div_ceil(workers);
    std::thread::scope(|scope| {
        let mut rest = out;
        let mut first_row = 0;
        while !rest.is_empty() {
            let take = (rows_per_chunk * row_len).min(rest.len());
            let (chunk, tail) = rest.split_at_mut(take);
            let fill = &fill;
            scope.spawn(move || fill(first_row, chunk));
            first_row += take / row_len;
            rest = tail;
        }
    });
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chunked_fill_matches_serial_fill() {
        let rows = 203;
        let row_len = 7;
        let fill = |first_row: usize, chunk: &mut [f64]| {
            for (r, row) in chunk.chunks_mut(row_len).enumerate() {
                for (c, v) in row.iter_mut().enumerate() {
                    *v = ((first_row + r) * row_len + c) as f64 * 0.5;
                }
            }
        };
        let mut serial = vec![0.0; rows * row_len];
        fill(0, &mut serial);
        let mut chunked = vec![0.0; rows * row_len];
        fill_rows(&mut chunked, row_len, fill);
        assert_eq!(serial, chunked);
    }
}

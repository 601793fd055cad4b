//! Worker-pool initialization. GRADPLAN_WORKERS caps rayon's thread count;
//! results are identical for any worker count because all parallel work is
//! indexed and reduced in a fixed order.

use std::sync::OnceLock;

static INIT: OnceLock<usize> = OnceLock::new();

/// Initialize the global pool once, honoring GRADPLAN_WORKERS. Returns the
/// effective worker count.
pub fn init_workers() -> usize {
    *INIT.get_or_init(|| {
        let requested = std::env::var("GRADPLAN_WORKERS")
            .ok()
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|&n| n >= 1);
        match requested {
            Some(n) => {
                // ignore the error if a pool already exists (e.g. in tests)
                let _ = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global();
                n
            }
            None => rayon::current_num_threads(),
        }
    })
}

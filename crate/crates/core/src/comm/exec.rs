/// How the per-PE supersteps of a group are executed on this machine.
///
/// The results never depend on the mode: every PE context is a pure
/// function of its own state and the messages it received.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Exec {
    /// Run PE contexts on the rayon pool (sequential when the `parallel`
    /// feature is disabled).
    #[default]
    Parallel,
    Sequential,
}

impl Exec {
    pub fn is_parallel(self) -> bool {
        cfg!(feature = "parallel") && self == Exec::Parallel
    }

    /// Applies `f` to every element with its index.
    pub fn map_mut<S, R, F>(self, items: &mut [S], f: F) -> Vec<R>
    where
        S: Send,
        R: Send,
        F: Fn(usize, &mut S) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && items.len() > 1 {
            use rayon::prelude::*;
            return items
                .par_iter_mut()
                .enumerate()
                .map(|(i, s)| f(i, s))
                .collect();
        }
        items.iter_mut().enumerate().map(|(i, s)| f(i, s)).collect()
    }

    pub fn map_ref<S, R, F>(self, items: &[S], f: F) -> Vec<R>
    where
        S: Sync,
        R: Send,
        F: Fn(usize, &S) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && items.len() > 1 {
            use rayon::prelude::*;
            return items.par_iter().enumerate().map(|(i, s)| f(i, s)).collect();
        }
        items.iter().enumerate().map(|(i, s)| f(i, s)).collect()
    }

    pub fn map_owned<S, R, F>(self, items: Vec<S>, f: F) -> Vec<R>
    where
        S: Send,
        R: Send,
        F: Fn(usize, S) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && items.len() > 1 {
            use rayon::prelude::*;
            return items
                .into_par_iter()
                .enumerate()
                .map(|(i, s)| f(i, s))
                .collect();
        }
        items.into_iter().enumerate().map(|(i, s)| f(i, s)).collect()
    }

    pub fn map_range<R, F>(self, n: usize, f: F) -> Vec<R>
    where
        R: Send,
        F: Fn(usize) -> R + Sync + Send,
    {
        #[cfg(feature = "parallel")]
        if self.is_parallel() && n > 1 {
            use rayon::prelude::*;
            return (0..n).into_par_iter().map(f).collect();
        }
        (0..n).map(f).collect()
    }
}

//! Timestamp algebras and the path summaries that act on them.
//!
//! The engine needs very little from a timestamp: a partial order, a least
//! element, and a family of monotone transformations ([`PathSummary`]) that
//! describe how times advance along dataflow paths. Two instances ship with
//! the crate: `u64` (a total order) and [`Product`], a pair of integers under
//! the product order, which has genuinely incomparable elements.

use std::fmt::Debug;
use std::hash::Hash;

/// A partial order, kept separate from [`Ord`].
///
/// Implementors also implement `Ord`; that total order must be a linear
/// extension of this partial order (if `a.less_equal(b)` then `a <= b`). The
/// engine relies on that when it sorts times.
pub trait PartialOrder: Eq {
    /// Set when `less_equal` relates every pair; enables shortcuts in
    /// antichain maintenance.
    const IS_TOTAL: bool = false;

    fn less_equal(&self, other: &Self) -> bool;

    fn less_than(&self, other: &Self) -> bool {
        self != other && self.less_equal(other)
    }
}

/// A monotone, non-decreasing transformation of timestamps.
///
/// `Default` is the identity summary. Summaries are themselves partially
/// ordered: `a.less_equal(b)` means `a` never yields a later time than `b`.
pub trait PathSummary<T>: Clone + Ord + Hash + Debug + Default + PartialOrder + 'static {
    /// Applies the summary to `time`. Overflow saturates at the largest value.
    fn results_in(&self, time: &T) -> T;

    /// The summary of following `self` and then `other`.
    fn followed_by(&self, other: &Self) -> Self;

    fn is_identity(&self) -> bool {
        *self == Self::default()
    }
}

/// A logical timestamp usable by the engine.
pub trait Timestamp: Clone + Ord + Hash + Debug + PartialOrder + Send + 'static {
    type Summary: PathSummary<Self>;

    /// The least element: `minimum().less_equal(t)` for every `t`.
    fn minimum() -> Self;
}

/// Marker for timestamps whose partial order is total.
///
/// Watermark-style idioms only make sense for these.
pub trait TotalOrder: Timestamp {}

impl PartialOrder for u64 {
    const IS_TOTAL: bool = true;

    #[inline]
    fn less_equal(&self, other: &Self) -> bool {
        self <= other
    }
}

impl PathSummary<u64> for u64 {
    #[inline]
    fn results_in(&self, time: &u64) -> u64 {
        time.saturating_add(*self)
    }

    #[inline]
    fn followed_by(&self, other: &Self) -> Self {
        self.saturating_add(*other)
    }
}

impl Timestamp for u64 {
    type Summary = u64;

    fn minimum() -> Self {
        0
    }
}

impl TotalOrder for u64 {}

/// A pair of integers ordered component-wise.
///
/// The derived `Ord` is lexicographic, which extends the product order.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Product {
    pub outer: u64,
    pub inner: u64,
}

impl Product {
    pub const fn new(outer: u64, inner: u64) -> Self {
        Product { outer, inner }
    }
}

impl PartialOrder for Product {
    #[inline]
    fn less_equal(&self, other: &Self) -> bool {
        self.outer <= other.outer && self.inner <= other.inner
    }
}

/// Component-wise increments double as summaries for [`Product`] times.
impl PathSummary<Product> for Product {
    #[inline]
    fn results_in(&self, time: &Product) -> Product {
        Product {
            outer: time.outer.saturating_add(self.outer),
            inner: time.inner.saturating_add(self.inner),
        }
    }

    #[inline]
    fn followed_by(&self, other: &Self) -> Self {
        self.results_in(other)
    }
}

impl Timestamp for Product {
    type Summary = Product;

    fn minimum() -> Self {
        Product::default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn product() -> impl Strategy<Value = Product> {
        (0u64..6, 0u64..6).prop_map(|(a, b)| Product::new(a, b))
    }

    #[test]
    fn identity_and_increment() {
        assert_eq!(0u64.results_in(&7), 7);
        assert_eq!(1u64.results_in(&7), 8);
        assert_eq!(1u64.followed_by(&2).results_in(&0), 3);
    }

    #[test]
    fn increments_saturate() {
        assert_eq!(5u64.results_in(&(u64::MAX - 2)), u64::MAX);
        let big = Product::new(u64::MAX, 1);
        assert_eq!(big.results_in(&Product::new(3, 3)), Product::new(u64::MAX, 4));
    }

    #[test]
    fn product_order_is_partial() {
        let a = Product::new(0, 1);
        let b = Product::new(1, 0);
        assert!(!a.less_equal(&b));
        assert!(!b.less_equal(&a));
        assert!(Product::minimum().less_equal(&a));
        // lexicographic Ord still extends the partial order
        assert!(a < b);
    }

    proptest! {
        #[test]
        fn u64_order_laws(a in 0u64..50, b in 0u64..50, c in 0u64..50) {
            prop_assert!(a.less_equal(&a));
            if a.less_equal(&b) && b.less_equal(&a) { prop_assert_eq!(a, b); }
            if a.less_equal(&b) && b.less_equal(&c) { prop_assert!(a.less_equal(&c)); }
            prop_assert!(u64::minimum().less_equal(&a));
        }

        #[test]
        fn product_order_laws(a in product(), b in product(), c in product()) {
            prop_assert!(a.less_equal(&a));
            if a.less_equal(&b) && b.less_equal(&a) { prop_assert_eq!(a, b); }
            if a.less_equal(&b) && b.less_equal(&c) { prop_assert!(a.less_equal(&c)); }
            if a.less_equal(&b) { prop_assert!(a <= b); }
            prop_assert!(Product::minimum().less_equal(&a));
        }

        #[test]
        fn u64_summary_laws(s in 0u64..20, r in 0u64..20, a in 0u64..100, b in 0u64..100) {
            prop_assert!(a.less_equal(&s.results_in(&a)));
            if a.less_equal(&b) { prop_assert!(s.results_in(&a).less_equal(&s.results_in(&b))); }
            prop_assert_eq!(s.followed_by(&r).results_in(&a), r.results_in(&s.results_in(&a)));
            prop_assert_eq!(u64::default().followed_by(&s), s);
        }

        #[test]
        fn product_summary_laws(s in product(), r in product(), q in product(), a in product(), b in product()) {
            prop_assert!(a.less_equal(&s.results_in(&a)));
            if a.less_equal(&b) { prop_assert!(s.results_in(&a).less_equal(&s.results_in(&b))); }
            prop_assert_eq!(s.followed_by(&r).results_in(&a), r.results_in(&s.results_in(&a)));
            prop_assert_eq!(s.followed_by(&r).followed_by(&q), s.followed_by(&r.followed_by(&q)));
            prop_assert_eq!(Product::default().followed_by(&s), s);
        }
    }
}

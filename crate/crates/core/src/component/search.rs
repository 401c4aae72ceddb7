use std::cmp::Ordering;

/// Exponential search starting at `from`, then binary search within the
/// located range. Same contract as `slice::binary_search_by`.
///
/// Falls back to a binary search of `[0, from)` when the target lies before
/// the start position.
pub fn exponential_search_by<T>(
    items: &[T],
    from: usize,
    mut cmp: impl FnMut(&T) -> Ordering,
) -> Result<usize, usize> {
    let len = items.len();
    if from >= len || cmp(&items[from]) == Ordering::Greater {
        let end = from.min(len);
        return items[..end].binary_search_by(cmp);
    }
    let mut lo = from;
    let mut step = 1;
    let mut hi = from + 1;
    while hi < len {
        match cmp(&items[hi]) {
            Ordering::Equal => return Ok(hi),
            Ordering::Greater => break,
            Ordering::Less => {
                lo = hi;
                step *= 2;
                hi = from + step;
            }
        }
    }
    let hi = hi.min(len);
    match items[lo..hi].binary_search_by(cmp) {
        Ok(i) => Ok(lo + i),
        Err(i) => Err(lo + i),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn finds_forward_and_backward() {
        let v: Vec<u32> = (0..100).map(|i| i * 2).collect();
        assert_eq!(exponential_search_by(&v, 10, |x| x.cmp(&40)), Ok(20));
        assert_eq!(exponential_search_by(&v, 30, |x| x.cmp(&40)), Ok(20));
        assert_eq!(exponential_search_by(&v, 0, |x| x.cmp(&41)), Err(21));
        assert_eq!(exponential_search_by(&v, 99, |x| x.cmp(&1000)), Err(100));
        assert_eq!(exponential_search_by(&[] as &[u32], 0, |x| x.cmp(&1)), Err(0));
    }

    proptest! {
        #[test]
        fn agrees_with_binary_search(
            mut v in proptest::collection::vec(0u32..500, 0..200),
            from in 0usize..220,
            target in 0u32..520,
        ) {
            v.sort();
            v.dedup();
            let expect = v.binary_search(&target);
            prop_assert_eq!(exponential_search_by(&v, from, |x| x.cmp(&target)), expect);
        }
    }
}

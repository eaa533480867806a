//! Mixed-radix indexing over discrete state spaces and the textual row-key
//! scheme used to address table rows.
//!
//! Rows of a table over predecessors `(p1, .., pn)` are stored in
//! Cartesian-product order with the last predecessor varying fastest.

/// Number of joint states of variables with the given cardinalities.
pub fn state_count(cards: &[usize]) -> usize {
    cards.iter().product()
}

/// Row-major index of `states` under `cards`.
pub fn state_index(states: &[usize], cards: &[usize]) -> usize {
    debug_assert_eq!(states.len(), cards.len());
    states
        .iter()
        .zip(cards)
        .fold(0, |acc, (&s, &c)| acc * c + s)
}

/// Inverse of [`state_index`].
pub fn state_at(mut index: usize, cards: &[usize]) -> Vec<usize> {
    let mut out = vec![0; cards.len()];
    for (slot, &c) in out.iter_mut().zip(cards).rev() {
        *slot = index % c;
        index /= c;
    }
    out
}

/// Iterates every joint state in row-major order.
#[derive(Debug, Clone)]
pub struct States {
    cards: Vec<usize>,
    next: Option<Vec<usize>>,
}

impl States {
    pub fn new(cards: &[usize]) -> Self {
        let next = if cards.contains(&0) {
            None
        } else {
            Some(vec![0; cards.len()])
        };
        States {
            cards: cards.to_vec(),
            next,
        }
    }
}

impl Iterator for States {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        let current = self.next.take()?;
        let mut succ = current.clone();
        let mut carried = true;
        for i in (0..succ.len()).rev() {
            succ[i] += 1;
            if succ[i] < self.cards[i] {
                carried = false;
                break;
            }
            succ[i] = 0;
        }
        if !carried {
            self.next = Some(succ);
        }
        Some(current)
    }
}

/// Maps a state of one scope onto the row index of a table whose key
/// variables are a subset of that scope.
#[derive(Debug, Clone)]
pub struct Projection {
    parts: Vec<(usize, usize)>,
}

impl Projection {
    /// `scope` and `target` are variable names; `card` gives cardinalities.
    /// Returns `None` if a target variable is missing from the scope.
    pub fn new<F>(scope: &[String], target: &[String], card: F) -> Option<Self>
    where
        F: Fn(&str) -> usize,
    {
        let mut parts = Vec::with_capacity(target.len());
        let mut stride = 1;
        for name in target.iter().rev() {
            let pos = scope.iter().position(|s| s == name)?;
            parts.push((pos, stride));
            stride *= card(name);
        }
        Some(Projection { parts })
    }

    pub fn index(&self, state: &[usize]) -> usize {
        self.parts.iter().map(|&(pos, stride)| state[pos] * stride).sum()
    }
}

const SEPARATOR: char = '|';
const ESCAPE: char = '\\';

/// Escapes `\` and `|` in a single outcome label.
pub fn escape_label(label: &str, out: &mut String) {
    for ch in label.chars() {
        if ch == SEPARATOR || ch == ESCAPE {
            out.push(ESCAPE);
        }
        out.push(ch);
    }
}

/// Joins outcome labels into a row key such as `good|treat`.
/// The empty key addresses the single row of a table with no predecessors.
pub fn format_row_key<S: AsRef<str>>(labels: &[S]) -> String {
    let mut out = String::new();
    for (i, label) in labels.iter().enumerate() {
        if i > 0 {
            out.push(SEPARATOR);
        }
        escape_label(label.as_ref(), &mut out);
    }
    out
}

/// Splits a row key back into labels. A dangling escape is kept literally.
pub fn parse_row_key(key: &str) -> Vec<String> {
    if key.is_empty() {
        return Vec::new();
    }
    let mut labels = vec![String::new()];
    let mut chars = key.chars();
    while let Some(ch) = chars.next() {
        match ch {
            ESCAPE => match chars.next() {
                Some(next) => labels.last_mut().unwrap().push(next),
                None => labels.last_mut().unwrap().push(ESCAPE),
            },
            SEPARATOR => labels.push(String::new()),
            other => labels.last_mut().unwrap().push(other),
        }
    }
    labels
}

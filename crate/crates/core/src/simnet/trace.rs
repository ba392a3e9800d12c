//! Run trace: one line per observable event, timestamps first, stable
//! byte-for-byte under a fixed (scenario, seed). Adversarial bursts are
//! collapsed to a single line carrying their attempt count so a
//! hundred-thousand-presentation attack stays readable.

use crate::simnet::events::SimMs;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TraceLine {
    pub at_ms: SimMs,
    pub text: String,
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Trace {
    lines: Vec<TraceLine>,
}

impl Trace {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a line; trace time never goes backwards.
    pub fn push(&mut self, at_ms: SimMs, text: impl Into<String>) {
        if let Some(last) = self.lines.last() {
            debug_assert!(at_ms >= last.at_ms, "trace time went backwards");
        }
        self.lines.push(TraceLine {
            at_ms,
            text: text.into(),
        });
    }

    pub fn lines(&self) -> &[TraceLine] {
        &self.lines
    }

    pub fn len(&self) -> usize {
        self.lines.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lines.is_empty()
    }

    /// Lines containing `needle`, for event counting in tests.
    pub fn count_containing(&self, needle: &str) -> usize {
        self.lines
            .iter()
            .filter(|l| l.text.contains(needle))
            .count()
    }

    /// The full trace as text: zero-padded millisecond stamp, space,
    /// event text, newline.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for line in &self.lines {
            out.push_str(&format!("{:09} {}\n", line.at_ms, line.text));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn renders_fixed_width_timestamps() {
        let mut trace = Trace::new();
        trace.push(0, "service T01 display nonce=123456");
        trace.push(4_100, "device glass scan T01 decoded");
        let text = trace.render();
        assert_eq!(
            text,
            "000000000 service T01 display nonce=123456\n\
             000004100 device glass scan T01 decoded\n"
        );
        assert_eq!(trace.count_containing("display"), 1);
    }
}

use std::collections::BTreeSet;

use super::tokenize::{tokenize, TokenSequence};

/// A list of named entities matched as contiguous token sequences.
#[derive(Debug, Clone, Default)]
pub struct Lexicon {
    entries: Vec<(String, TokenSequence)>,
}

impl Lexicon {
    pub fn new<I, S>(entries: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut seen = BTreeSet::new();
        let entries = entries
            .into_iter()
            .filter_map(|e| {
                let tokens = tokenize(e.as_ref());
                (!tokens.is_empty() && seen.insert(tokens.clone()))
                    .then(|| (e.as_ref().to_string(), tokens))
            })
            .collect();
        Self { entries }
    }

    /// The 18 serving tool names; each tokenizes to a single lowercase token.
    pub fn tools() -> Self {
        Self::new(crate::sim::ToolName::ALL.iter().map(|t| t.as_str()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Indices of entries mentioned in `text`.
    pub fn mentions(&self, text: &[String]) -> BTreeSet<usize> {
        self.entries
            .iter()
            .enumerate()
            .filter(|(_, (_, seq))| contains_run(text, seq))
            .map(|(i, _)| i)
            .collect()
    }

    pub fn name(&self, index: usize) -> &str {
        &self.entries[index].0
    }
}

fn contains_run(haystack: &[String], needle: &[String]) -> bool {
    !needle.is_empty()
        && haystack.len() >= needle.len()
        && haystack.windows(needle.len()).any(|w| w == needle)
}

/// Fraction of reference-mentioned lexicon entries that the candidate also
/// mentions. `None` (abstain) when the reference mentions nothing.
pub fn entity_acc(candidate: &[String], reference: &[String], lexicon: &Lexicon) -> Option<f64> {
    let wanted = lexicon.mentions(reference);
    if wanted.is_empty() {
        return None;
    }
    let got = lexicon.mentions(candidate);
    Some(wanted.intersection(&got).count() as f64 / wanted.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn acc(c: &str, r: &str, lex: &Lexicon) -> Option<f64> {
        entity_acc(&tokenize(c), &tokenize(r), lex)
    }

    #[test]
    fn tool_examples() {
        let lex = Lexicon::tools();
        assert_eq!(lex.len(), 18);
        assert_eq!(
            acc("Calling NextStep now.", "Use NextStep then Explode.", &lex),
            Some(0.5)
        );
        assert_eq!(acc("anything", "Hello there", &lex), None);
        let r = "Try GoToStep, then rotate.";
        assert_eq!(acc(r, r, &lex), Some(1.0));
        // prose "next step" is not the tool name
        assert_eq!(acc("go to the next step", "NextStep", &lex), Some(0.0));
    }

    #[test]
    fn multi_token_theme_entities() {
        let lex = Lexicon::new(["plate 1x2", "upper body", "brick"]);
        assert_eq!(
            acc(
                "Put the upper body on the plate.",
                "Attach the Upper Body to a plate 1x2.",
                &lex
            ),
            Some(0.5)
        );
        assert_eq!(acc("body upper", "upper body", &lex), Some(0.0));
    }

    proptest! {
        #[test]
        fn invariant_to_case_and_noise(
            words in prop::collection::vec(prop::sample::select(vec!["place", "plate", "1x2", "upper", "body", "brick", "nextstep"]), 0..12),
            refw in prop::collection::vec(prop::sample::select(vec!["plate", "1x2", "upper", "body", "brick", "explode"]), 1..12),
            noise in prop::collection::vec("zz[a-y]{1,5}", 0..5),
            upper in any::<bool>(),
        ) {
            let lex = Lexicon::new(["plate 1x2", "upper body", "brick", "NextStep", "Explode"]);
            let cand = words.join(" ");
            let reference = refw.join(" ");
            let base = acc(&cand, &reference, &lex);
            let cased = if upper { cand.to_uppercase() } else { cand.clone() };
            let noisy = format!("{} {} {}", noise.join(" "), cased, noise.join(" "));
            prop_assert_eq!(acc(&noisy, &reference, &lex), base);
        }
    }
}

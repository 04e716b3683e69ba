use std::collections::BTreeSet;

use rand::seq::{index, SliceRandom};
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::FunctionRecord;
use crate::error::{Error, Result};
use crate::rng::{self, stream, Rng};

/// Parameters of the pattern-planting generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_functions: usize,
    /// Inclusive range of statements per function.
    pub min_statements: usize,
    pub max_statements: usize,
    pub n_patterns: usize,
    pub pattern_len: usize,
    pub vuln_ratio: f64,
    /// Number of distinct identifier names available for renaming.
    pub vocab_size: usize,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_functions: 500,
            min_statements: 10,
            max_statements: 30,
            n_patterns: 3,
            pattern_len: 3,
            vuln_ratio: 0.5,
            vocab_size: 40,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::config(m));
        if self.n_functions == 0 {
            return fail("n_functions must be positive".into());
        }
        if self.n_patterns == 0 || self.pattern_len == 0 {
            return fail("need at least one pattern of at least one statement".into());
        }
        if self.min_statements > self.max_statements {
            return fail(format!("empty length range {}..={}", self.min_statements, self.max_statements));
        }
        if self.pattern_len >= self.min_statements {
            return fail(format!(
                "pattern_len {} must be below the minimum function length {}",
                self.pattern_len, self.min_statements
            ));
        }
        // non-contiguous placement needs a gap after every injected statement but the last
        if self.min_statements < 2 * self.pattern_len - 1 {
            return fail(format!(
                "functions of {} statements cannot hold {} non-adjacent pattern statements",
                self.min_statements, self.pattern_len
            ));
        }
        if !(0.0..=1.0).contains(&self.vuln_ratio) {
            return fail(format!("vuln_ratio {} outside [0, 1]", self.vuln_ratio));
        }
        if self.vocab_size < 3 {
            return fail("vocab_size must be at least 3".into());
        }
        Ok(())
    }
}

// `$A`, `$B`, `$C` are identifiers, `$N` a small integer literal.
const BENIGN_TEMPLATES: &[&str] = &[
    "int $A = $N;",
    "$A = $B + $C;",
    "$A = $B * $N;",
    "$A = $B - $C;",
    "if ($A > $B) {",
    "}",
    "return $A;",
    "$A++;",
    "$A += $B;",
    "$A -= $N;",
    "for ($A = 0; $A < $B; $A++) {",
    "while ($A != $N) {",
    "$A = $B($C);",
    "$B($A, $C);",
    "else {",
    "printf(\"%d\\n\", $A);",
    "$A = $B[$N];",
    "$A = ($B == $C);",
    "break;",
    "$A = $B / $N;",
    "$A->$B = $C;",
    "assert($A >= 0);",
];

const PATTERN_POOL: &[&str] = &[
    "char $A[$N];",
    "strcpy($A, $B);",
    "$A[$B] = '\\0';",
    "$A = malloc($B);",
    "free($A);",
    "$C = *$A;",
    "if ($A < $B)",
    "$C = $A[$B];",
    "memcpy($A, $C, $B);",
    "sprintf($A, \"%s\", $B);",
    "$B = strlen($A);",
    "gets($A);",
    "$A = realloc($A, $B);",
    "strcat($A, $B);",
    "scanf(\"%d\", &$B);",
];

const NAMES: &[&str] = &[
    "buf", "len", "idx", "ptr", "data", "src", "dst", "count", "size", "val", "tmp", "res", "node", "item",
    "key", "n", "i", "j", "k", "p", "q", "str", "arr", "off", "pos", "cur", "next", "prev", "head", "tail",
    "flag", "ret", "total", "limit", "base", "ctx", "msg", "line", "word", "mode",
];

/// Identifier names used by a generator configured with `vocab_size`.
pub fn identifier_pool(vocab_size: usize) -> Vec<String> {
    (0..vocab_size)
        .map(|i| match NAMES.get(i) {
            Some(n) => (*n).to_string(),
            None => format!("var{i}"),
        })
        .collect()
}

/// The ordered template statements of every pattern, with `$`-placeholders.
pub fn pattern_templates(n_patterns: usize, pattern_len: usize) -> Vec<Vec<String>> {
    (0..n_patterns)
        .map(|p| {
            (0..pattern_len)
                .map(|s| match PATTERN_POOL.get(p * pattern_len + s) {
                    Some(t) => (*t).to_string(),
                    None => format!("unsafe_op{p}_{s}($A, $B);"),
                })
                .collect()
        })
        .collect()
}

fn fill(template: &str, names: &[&str; 3], rng: &mut Rng) -> String {
    let mut out = String::with_capacity(template.len() + 8);
    let mut chars = template.chars().peekable();
    while let Some(c) = chars.next() {
        if c == '$' {
            match chars.next() {
                Some('A') => out.push_str(names[0]),
                Some('B') => out.push_str(names[1]),
                Some('C') => out.push_str(names[2]),
                Some('N') => out.push_str(&rng.gen_range(1..64).to_string()),
                Some(other) => {
                    out.push('$');
                    out.push(other);
                }
                None => out.push('$'),
            }
        } else {
            out.push(c);
        }
    }
    out
}

fn pick_names<'a>(pool: &'a [String], rng: &mut Rng) -> [&'a str; 3] {
    let ix = index::sample(rng, pool.len(), 3);
    [pool[ix.index(0)].as_str(), pool[ix.index(1)].as_str(), pool[ix.index(2)].as_str()]
}

/// Strictly increasing positions in `0..len`, no two adjacent.
fn spread_positions(len: usize, count: usize, rng: &mut Rng) -> Vec<usize> {
    // choose from the compressed range, then re-expand to force gaps
    let mut slots: Vec<usize> = index::sample(rng, len - (count - 1), count).into_vec();
    slots.sort_unstable();
    slots.into_iter().enumerate().map(|(k, s)| s + k).collect()
}

/// Generates a corpus where every vulnerable function carries one of
/// `n_patterns` fixed statement groups at random non-adjacent positions.
///
/// Pattern identifiers are renamed per function. The injected positions are
/// recorded as the ground truth and the pattern id as `origin`
/// (`"pattern:<p>"`; benign functions get `"benign"`).
pub fn generate_synthetic(config: &SyntheticConfig, seed: u64) -> Result<Vec<FunctionRecord>> {
    config.validate()?;
    let pool = identifier_pool(config.vocab_size);
    let patterns = pattern_templates(config.n_patterns, config.pattern_len);

    let n_vuln = (config.n_functions as f64 * config.vuln_ratio).round() as usize;
    let mut order: Vec<usize> = (0..config.n_functions).collect();
    order.shuffle(&mut rng::rng(seed, &[stream::GENERATE, u64::MAX]));
    let vulnerable: BTreeSet<usize> = order.into_iter().take(n_vuln).collect();

    (0..config.n_functions)
        .map(|i| {
            let mut rng = rng::rng(seed, &[stream::GENERATE, i as u64]);
            let len = rng.gen_range(config.min_statements..=config.max_statements);
            let id = format!("syn-{i:05}");
            if vulnerable.contains(&i) {
                let p = rng.gen_range(0..config.n_patterns);
                let positions = spread_positions(len, config.pattern_len, &mut rng);
                let names = pick_names(&pool, &mut rng);
                let mut injected = patterns[p].iter();
                let statements = (0..len)
                    .map(|k| {
                        if positions.binary_search(&k).is_ok() {
                            let t = injected.next().expect("one template per position");
                            fill(t, &names, &mut rng)
                        } else {
                            benign_statement(&pool, &mut rng)
                        }
                    })
                    .collect();
                Ok(FunctionRecord::new(id, statements, 1, positions)?.with_origin(format!("pattern:{p}")))
            } else {
                let statements = (0..len).map(|_| benign_statement(&pool, &mut rng)).collect();
                Ok(FunctionRecord::new(id, statements, 0, [])?.with_origin("benign"))
            }
        })
        .collect()
}

fn benign_statement(pool: &[String], rng: &mut Rng) -> String {
    let t = BENIGN_TEMPLATES[rng.gen_range(0..BENIGN_TEMPLATES.len())];
    let names = pick_names(pool, rng);
    fill(t, &names, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::tokenize_statement;

    // Replace pool identifiers and integer literals with a wildcard.
    fn shape(stmt: &str, pool: &[String]) -> Vec<String> {
        tokenize_statement(stmt)
            .into_iter()
            .map(|t| {
                if pool.contains(&t) || t.starts_with('$') || t.chars().all(|c| c.is_ascii_digit()) {
                    "?".to_string()
                } else {
                    t
                }
            })
            .collect()
    }

    fn template_shape(t: &str, pool: &[String]) -> Vec<String> {
        shape(&t.replace("$A", "buf").replace("$B", "len").replace("$C", "idx").replace("$N", "7"), pool)
    }

    #[test]
    fn counts_and_truth_sizes() {
        let cfg = SyntheticConfig::default();
        let recs = generate_synthetic(&cfg, 11).unwrap();
        assert_eq!(recs.len(), 500);
        let vuln: Vec<_> = recs.iter().filter(|r| r.label == 1).collect();
        assert_eq!(vuln.len(), 250);
        assert!(vuln.iter().all(|r| r.vuln_indices.len() == cfg.pattern_len));
        assert!(recs.iter().filter(|r| r.label == 0).all(|r| r.vuln_indices.is_empty()));
        assert!(recs
            .iter()
            .all(|r| (cfg.min_statements..=cfg.max_statements).contains(&r.statements.len())));
    }

    #[test]
    fn positions_increasing_and_non_adjacent() {
        let recs = generate_synthetic(&SyntheticConfig::default(), 5).unwrap();
        for r in recs.iter().filter(|r| r.label == 1) {
            let v: Vec<usize> = r.vuln_indices.iter().copied().collect();
            assert!(v.windows(2).all(|w| w[1] >= w[0] + 2), "{v:?}");
        }
    }

    #[test]
    fn injected_statements_match_their_pattern() {
        let cfg = SyntheticConfig::default();
        let pool = identifier_pool(cfg.vocab_size);
        let templates = pattern_templates(cfg.n_patterns, cfg.pattern_len);
        let recs = generate_synthetic(&cfg, 21).unwrap();
        for r in recs.iter().filter(|r| r.label == 1) {
            let p: usize = r.origin.strip_prefix("pattern:").unwrap().parse().unwrap();
            let got: Vec<_> = r.vuln_indices.iter().map(|&i| shape(&r.statements[i], &pool)).collect();
            let want: Vec<_> = templates[p].iter().map(|t| template_shape(t, &pool)).collect();
            assert_eq!(got, want, "{}", r.id);
        }
    }

    #[test]
    fn renaming_is_consistent_within_a_function() {
        let recs = generate_synthetic(&SyntheticConfig::default(), 4).unwrap();
        // pattern 0 declares $A then copies into $A
        let r = recs.iter().find(|r| r.origin == "pattern:0").unwrap();
        let idx: Vec<usize> = r.vuln_indices.iter().copied().collect();
        let decl = tokenize_statement(&r.statements[idx[0]]);
        let copy = tokenize_statement(&r.statements[idx[1]]);
        assert_eq!(decl[1], copy[2]);
    }

    #[test]
    fn deterministic() {
        let cfg = SyntheticConfig { n_functions: 40, ..Default::default() };
        assert_eq!(generate_synthetic(&cfg, 3).unwrap(), generate_synthetic(&cfg, 3).unwrap());
        assert_ne!(generate_synthetic(&cfg, 3).unwrap(), generate_synthetic(&cfg, 4).unwrap());
    }

    #[test]
    fn many_patterns_stay_distinct() {
        let t = pattern_templates(8, 3);
        let flat: BTreeSet<&String> = t.iter().flatten().collect();
        assert_eq!(flat.len(), 24);
    }

    #[test]
    fn infeasible_configs() {
        let base = SyntheticConfig::default();
        let bad = [
            SyntheticConfig { pattern_len: 10, ..base.clone() },
            SyntheticConfig { min_statements: 4, max_statements: 9, pattern_len: 3, ..base.clone() },
            SyntheticConfig { n_patterns: 0, ..base.clone() },
            SyntheticConfig { vuln_ratio: 1.5, ..base.clone() },
            SyntheticConfig { min_statements: 20, max_statements: 10, ..base.clone() },
            SyntheticConfig { vocab_size: 2, ..base.clone() },
        ];
        for cfg in bad {
            assert!(generate_synthetic(&cfg, 0).is_err(), "{cfg:?}");
        }
    }
}

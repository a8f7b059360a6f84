use edc_core::expr::{Equation, FeatureId, GrammarConfig, Summand, SummandShape};
use proptest::prelude::*;

fn summand_strategy(m: usize) -> impl Strategy<Value = Summand> {
    let c = -3.0..3.0f64;
    prop_oneof![
        (c.clone(), 0..m).prop_map(|(coef, f)| Summand::Linear {
            coef,
            feature: FeatureId(f)
        }),
        (c.clone(), 0..m, 0..m).prop_map(|(coef, a, b)| Summand::Product {
            coef,
            left: FeatureId(a.min(b)),
            right: FeatureId(a.max(b)),
        }),
        (c.clone(), c, 0..m).prop_map(|(outer, inner, f)| Summand::Exp {
            outer,
            inner,
            feature: FeatureId(f)
        }),
    ]
}

/// Random equations over `m` features with up to four distinct summands.
fn equation_strategy(m: usize) -> impl Strategy<Value = Equation> {
    (-3.0..3.0f64, prop::collection::vec(summand_strategy(m), 0..5)).prop_map(|(c0, mut summands)| {
        let mut seen = std::collections::BTreeSet::new();
        summands.retain(|s| seen.insert(s.shape()));
        Equation::new(c0, summands).expect("distinct shapes")
    })
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradient_matches_central_differences(
        eq in equation_strategy(3),
        x in prop::collection::vec(0.0..1.0f64, 3),
    ) {
        let h = 1e-6;
        let grad = eq.gradient(&x).unwrap();
        let c = eq.constants();
        prop_assert_eq!(grad.len(), c.len());
        for i in 0..c.len() {
            let mut up = c.clone();
            let mut down = c.clone();
            up[i] += h;
            down[i] -= h;
            let fd = (eq.with_constants(&up).unwrap().evaluate(&x).unwrap()
                - eq.with_constants(&down).unwrap().evaluate(&x).unwrap())
                / (2.0 * h);
            prop_assert!(rel_err(grad[i], fd) < 1e-5, "constant {i}: {} vs {fd}", grad[i]);
        }
    }

    #[test]
    fn denormalized_rendering_evaluates_like_normalized_equation(
        eq in equation_strategy(3),
        mins in prop::collection::vec(-50.0..50.0f64, 3),
        ranges in prop::collection::vec(0.1..100.0f64, 3),
        u in prop::collection::vec(0.0..1.0f64, 3),
    ) {
        let raw: Vec<f64> = (0..3).map(|i| mins[i] + u[i] * ranges[i]).collect();
        let normalized: Vec<f64> = (0..3).map(|i| (raw[i] - mins[i]) / ranges[i]).collect();
        let expected = eq.evaluate(&normalized).unwrap();
        let display = eq.denormalize(&mins, &ranges).unwrap();
        prop_assert!(rel_err(display.evaluate(&raw).unwrap(), expected) < 1e-9);

        let names: Vec<String> = (0..3).map(|i| format!("v{i}")).collect();
        let text = display.to_infix_string(&names, 17).unwrap();
        let parsed = infix::eval(&text, &names, &raw);
        prop_assert!(rel_err(parsed, expected) < 1e-9, "{text}: {parsed} vs {expected}");
    }

    #[test]
    fn canonicalize_is_idempotent(eq in equation_strategy(4)) {
        let again = eq.clone().canonicalize().unwrap();
        prop_assert_eq!(&again, &eq);
        prop_assert_eq!(Equation::new(eq.intercept(), eq.summands().iter().rev().cloned().collect()).unwrap(), eq);
    }

    #[test]
    fn json_round_trip_is_exact(eq in equation_strategy(4)) {
        let back = Equation::from_json(&eq.to_json()).unwrap();
        prop_assert_eq!(back.constants(), eq.constants());
        prop_assert_eq!(back, eq);
    }

    #[test]
    fn children_of_random_parents_are_canonical_and_distinct(eq in equation_strategy(3)) {
        let grammar = GrammarConfig::search(3, 6);
        let children = eq.refinements(&grammar);
        let all = grammar.shapes().len();
        prop_assert_eq!(children.len(), all - eq.len());
        let mut seen = std::collections::BTreeSet::new();
        for child in &children {
            prop_assert_eq!(&child.clone().canonicalize().unwrap(), child);
            prop_assert!(seen.insert(child.shapes()));
            prop_assert_eq!(child.len(), eq.len() + 1);
        }
    }
}

#[test]
fn refinement_counts_for_one_to_six_features() {
    for m in 1..=6 {
        let grammar = GrammarConfig::search(m, 3);
        let children = Equation::constant(0.0).refinements(&grammar);
        assert_eq!(children.len(), 2 * m + m * (m + 1) / 2, "m = {m}");
        let mut shapes: Vec<Vec<SummandShape>> = children.iter().map(Equation::shapes).collect();
        for c in &children {
            assert_eq!(&c.clone().canonicalize().unwrap(), c);
        }
        shapes.sort();
        shapes.dedup();
        assert_eq!(shapes.len(), children.len());
    }
}

/// A small recursive-descent evaluator for rendered equations, used as an
/// independent route to the value of a printed expression.
mod infix {
    pub fn eval(text: &str, names: &[String], vars: &[f64]) -> f64 {
        let tokens = tokenize(text);
        let mut p = Parser {
            tokens,
            pos: 0,
            names,
            vars,
        };
        let v = p.sum();
        assert_eq!(p.pos, p.tokens.len(), "trailing input in {text}");
        v
    }

    #[derive(Debug, Clone, PartialEq)]
    enum Tok {
        Num(f64),
        Ident(String),
        Op(char),
    }

    fn tokenize(text: &str) -> Vec<Tok> {
        let chars: Vec<char> = text.chars().collect();
        let mut out = Vec::new();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            if c.is_whitespace() {
                i += 1;
            } else if c.is_ascii_digit() || c == '.' {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                out.push(Tok::Num(chars[start..i].iter().collect::<String>().parse().unwrap()));
            } else if c.is_alphabetic() {
                let start = i;
                while i < chars.len() && chars[i].is_alphanumeric() {
                    i += 1;
                }
                out.push(Tok::Ident(chars[start..i].iter().collect()));
            } else {
                out.push(Tok::Op(c));
                i += 1;
            }
        }
        out
    }

    struct Parser<'a> {
        tokens: Vec<Tok>,
        pos: usize,
        names: &'a [String],
        vars: &'a [f64],
    }

    impl Parser<'_> {
        fn peek(&self) -> Option<&Tok> {
            self.tokens.get(self.pos)
        }

        fn next(&mut self) -> Tok {
            self.pos += 1;
            self.tokens[self.pos - 1].clone()
        }

        fn sum(&mut self) -> f64 {
            let mut v = self.product();
            while let Some(Tok::Op(op @ ('+' | '-'))) = self.peek().cloned() {
                self.pos += 1;
                let rhs = self.product();
                v = if op == '+' { v + rhs } else { v - rhs };
            }
            v
        }

        fn product(&mut self) -> f64 {
            let mut v = self.power();
            while let Some(Tok::Op(op @ ('·' | '/'))) = self.peek().cloned() {
                self.pos += 1;
                let rhs = self.power();
                v = if op == '·' { v * rhs } else { v / rhs };
            }
            v
        }

        fn power(&mut self) -> f64 {
            let base = self.atom();
            if let Some(Tok::Op('^')) = self.peek() {
                self.pos += 1;
                let exp = self.atom();
                return base.powf(exp);
            }
            base
        }

        fn atom(&mut self) -> f64 {
            match self.next() {
                Tok::Num(v) => v,
                Tok::Op('-') => -self.atom(),
                Tok::Op('(') => {
                    let v = self.sum();
                    assert_eq!(self.next(), Tok::Op(')'));
                    v
                }
                Tok::Ident(name) if name == "exp" => {
                    assert_eq!(self.next(), Tok::Op('('));
                    let v = self.sum();
                    assert_eq!(self.next(), Tok::Op(')'));
                    v.exp()
                }
                Tok::Ident(name) => {
                    let i = self.names.iter().position(|n| *n == name).expect("known name");
                    self.vars[i]
                }
                t => panic!("unexpected token {t:?}"),
            }
        }
    }
}

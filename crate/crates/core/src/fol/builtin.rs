use super::{parse_axioms, Axiom};

/// The default knowledge base for zero-shot training.
pub const BUILTIN_AXIOMS: &str = "\
# every labelled sample belongs to its class
axiom phi1: forall diag(x, l) . isOfClass(x, l)

# class membership implies membership of the enclosing macroclass
axiom phi2: forall diag(x, l, q) . isOfClass(x, l) -> isOfMacro(x, q)

# two samples of the same class share attributes
axiom phi3: forall diag(x1, l1) . forall diag(x2, l2) where l1 == l2 . hasSameAttribute(x1, x2)

# samples of different classes do not
axiom phi4: forall diag(x1, l1) . forall diag(x2, l2) where l1 != l2 . not hasSameAttribute(x1, x2)

# a sample resembles the attribute vector of its own class
axiom phi5: forall diag(x, l) . forall diag(a, la) where l == la . hasSameAttribute(x, a)

# every seen class has some sample lacking a few of the class attributes
axiom phi6: forall lseen . exists diag(x, l) where l == lseen . isOfClassMasked(x, lseen)
";

pub fn builtin_axioms() -> Vec<Axiom> {
    parse_axioms(BUILTIN_AXIOMS).expect("built-in axioms parse")
}

//! Implicit tree topology with bit-label encoded processing elements.
//!
//! A PE label is the concatenation of its ancestor indices, one bit section
//! per hierarchy level, with section 0 (the cores of a processor) in the
//! least significant bits. Two PEs share an ancestor at level `i` exactly when
//! the most significant set bit of `a ^ b` falls into section `i`.

use std::fmt;

use crate::error::{Error, Result};

/// A bit-label of one processing element.
pub type Label = u64;

const WORD_BITS: u32 = Label::BITS;

/// Bottom-up description of a tree-shaped machine.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HierarchySpec {
    children: Vec<u32>,
    distances: Vec<u64>,
}

impl HierarchySpec {
    /// `children[i]` is the fan-out of a level-`i` node, `distances[i]` the
    /// cost of communicating through a level-`i` common ancestor.
    pub fn new(children: Vec<u32>, distances: Vec<u64>) -> Result<Self> {
        if children.is_empty() {
            return Err(Error::Validation("hierarchy must have at least one level".into()));
        }
        if children.len() != distances.len() {
            return Err(Error::Validation(format!(
                "hierarchy has {} levels but {} distances were given",
                children.len(),
                distances.len()
            )));
        }
        if let Some(i) = children.iter().position(|&h| h == 0) {
            return Err(Error::Validation(format!("hierarchy level {i} has zero children")));
        }
        Ok(Self { children, distances })
    }

    /// Parses the colon-separated command-line form, e.g. `4:2:5:4` and
    /// `1:10:100:1000`.
    pub fn parse(hierarchy: &str, distances: &str) -> Result<Self> {
        fn list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
            s.split(':')
                .map(|tok| {
                    tok.trim().parse::<T>().map_err(|_| {
                        Error::Validation(format!("invalid {what} entry `{tok}` in `{s}`"))
                    })
                })
                .collect()
        }
        let h: Vec<u32> = list(hierarchy, "hierarchy")?;
        let d: Vec<u64> = list(distances, "distance")?;
        Self::new(h, d)
    }

    /// A single-level machine with `k` PEs at uniform distance `d`.
    pub fn flat(k: u32, d: u64) -> Result<Self> {
        Self::new(vec![k], vec![d])
    }

    pub fn children(&self) -> &[u32] {
        &self.children
    }

    pub fn distances(&self) -> &[u64] {
        &self.distances
    }

    pub fn levels(&self) -> usize {
        self.children.len()
    }

    /// Product of the children counts, saturating at `u64::MAX`.
    pub fn num_pes(&self) -> u64 {
        self.children.iter().fold(1u64, |k, &h| k.saturating_mul(h as u64))
    }
}

impl fmt::Display for HierarchySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: Vec<String>| v.join(":");
        write!(
            f,
            "H={} D={}",
            join(self.children.iter().map(|x| x.to_string()).collect()),
            join(self.distances.iter().map(|x| x.to_string()).collect())
        )
    }
}

/// Result of a common-ancestor query.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AncestorLevel {
    SamePe,
    Level(usize),
}

/// Bit-label table for all PEs of a hierarchy. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Topology {
    spec: HierarchySpec,
    widths: Vec<u32>,
    offsets: Vec<u32>,
    labels: Vec<Label>,
    /// `(offset, level)` of every section with non-zero width, ascending.
    sections: Vec<(u32, usize)>,
}

fn ceil_log2(h: u32) -> u32 {
    if h <= 1 {
        0
    } else {
        WORD_BITS - ((h - 1) as Label).leading_zeros()
    }
}

impl Topology {
    /// Builds the label of every PE. PE `p` is decomposed in the mixed radix
    /// system given by the children counts; digit `i` is stored at bit offset
    /// `sum(widths[..i])`.
    pub fn build(spec: HierarchySpec) -> Result<Self> {
        let widths: Vec<u32> = spec.children.iter().map(|&h| ceil_log2(h)).collect();
        let mut offsets = Vec::with_capacity(widths.len());
        let mut total = 0u32;
        for &w in &widths {
            offsets.push(total);
            total += w;
        }
        if total > WORD_BITS {
            return Err(Error::Config(format!(
                "bit-label needs {total} bits, more than the {WORD_BITS}-bit word"
            )));
        }
        let k = spec.num_pes();
        if k > u32::MAX as u64 {
            return Err(Error::Config(format!("{k} PEs exceed the supported 2^32")));
        }
        let k = k as u32;
        let labels = (0..k)
            .map(|p| {
                let mut t = p;
                let mut label: Label = 0;
                for (i, &h) in spec.children.iter().enumerate() {
                    let r = t % h;
                    t /= h;
                    label |= (r as Label) << offsets[i];
                }
                label
            })
            .collect();
        let sections = widths
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0)
            .map(|(i, _)| (offsets[i], i))
            .collect();
        Ok(Self { spec, widths, offsets, labels, sections })
    }

    pub fn spec(&self) -> &HierarchySpec {
        &self.spec
    }

    pub fn num_pes(&self) -> u32 {
        self.labels.len() as u32
    }

    pub fn section_widths(&self) -> &[u32] {
        &self.widths
    }

    pub fn section_offsets(&self) -> &[u32] {
        &self.offsets
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    pub fn label_bits(&self) -> u32 {
        self.widths.iter().sum()
    }

    /// Value stored in section `level` of `label`.
    pub fn section_value(&self, label: Label, level: usize) -> u64 {
        let w = self.widths[level];
        if w == 0 {
            return 0;
        }
        (label >> self.offsets[level]) & ((1u64 << w) - 1)
    }

    pub fn pe_label(&self, pe: u32) -> Result<Label> {
        self.labels
            .get(pe as usize)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("PE {pe} out of range 0..{}", self.labels.len())))
    }

    /// Inverse of [`pe_label`](Self::pe_label), computed from the sections.
    pub fn label_to_pe(&self, label: Label) -> Result<u32> {
        let unknown = || Error::Lookup(format!("{label} is not a PE label"));
        let bits = self.label_bits();
        if bits < WORD_BITS && label >> bits != 0 {
            return Err(unknown());
        }
        let mut pe: u64 = 0;
        let mut radix: u64 = 1;
        for (i, &h) in self.spec.children.iter().enumerate() {
            let r = self.section_value(label, i);
            if r >= h as u64 {
                return Err(unknown());
            }
            pe += r * radix;
            radix *= h as u64;
        }
        Ok(pe as u32)
    }

    /// Level of the lowest common ancestor of two labels.
    #[inline]
    pub fn common_ancestor_level(&self, a: Label, b: Label) -> AncestorLevel {
        let x = a ^ b;
        if x == 0 {
            return AncestorLevel::SamePe;
        }
        let msb = WORD_BITS - 1 - x.leading_zeros();
        let idx = self.sections.partition_point(|&(off, _)| off <= msb);
        // idx >= 1 for well-formed labels since the first section starts at 0
        AncestorLevel::Level(self.sections[idx.saturating_sub(1)].1)
    }

    /// Communication cost between two PEs given by their labels.
    #[inline]
    pub fn distance(&self, a: Label, b: Label) -> u64 {
        match self.common_ancestor_level(a, b) {
            AncestorLevel::SamePe => 0,
            AncestorLevel::Level(i) => self.spec.distances[i],
        }
    }

    /// Communication cost between two PE indices.
    ///
    /// Panics if either index is out of range.
    #[inline]
    pub fn pe_distance(&self, p: u32, q: u32) -> u64 {
        self.distance(self.labels[p as usize], self.labels[q as usize])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn topo(h: &[u32], d: &[u64]) -> Topology {
        Topology::build(HierarchySpec::new(h.to_vec(), d.to_vec()).unwrap()).unwrap()
    }

    #[test]
    fn four_level_machine_labels() {
        let t = topo(&[4, 2, 5, 4], &[1, 10, 100, 1000]);
        assert_eq!(t.num_pes(), 160);
        assert_eq!(t.section_widths(), &[2, 1, 3, 2]);
        assert_eq!(t.section_offsets(), &[0, 2, 3, 6]);
        assert_eq!(*t.labels().iter().max().unwrap(), 231);
        assert_eq!(t.pe_label(83).unwrap(), 131);
        assert_eq!(t.pe_label(83).unwrap(), 0b10_000_0_11);
        assert_eq!(t.label_to_pe(131).unwrap(), 83);
    }

    #[test]
    fn single_level_two_pes() {
        let t = topo(&[2], &[1]);
        assert_eq!(t.labels(), &[0, 1]);
        assert_eq!(t.pe_label(0).unwrap(), 0);
    }

    #[test]
    fn three_by_three_labels() {
        let t = topo(&[3, 3], &[1, 5]);
        assert_eq!(t.section_widths(), &[2, 2]);
        assert_eq!(t.labels(), &[0, 1, 2, 4, 5, 6, 8, 9, 10]);
        assert_eq!(t.label_to_pe(4).unwrap(), 3);
        assert_eq!(t.common_ancestor_level(1, 2), AncestorLevel::Level(0));
        assert_eq!(t.common_ancestor_level(1, 4), AncestorLevel::Level(1));
        assert_eq!(t.common_ancestor_level(6, 6), AncestorLevel::SamePe);
    }

    #[test]
    fn xor_distances() {
        let t = topo(&[4, 4, 4], &[2, 4, 10]);
        assert_eq!(t.distance(5, 4), 2);
        assert_eq!(t.distance(5, 1), 4);
        assert_eq!(t.distance(5, 21), 10);
        assert_eq!(t.distance(21, 5), 10);
        for &x in t.labels() {
            assert_eq!(t.distance(x, x), 0);
        }
    }

    #[test]
    fn node_level_ancestor() {
        let t = topo(&[4, 2, 5, 4], &[1, 10, 100, 1000]);
        // same rack, same core/processor digits, different node
        let a = t.pe_label(3).unwrap();
        let b = t.pe_label(3 + 8 * 4).unwrap();
        assert_eq!(t.common_ancestor_level(a, b), AncestorLevel::Level(2));
    }

    #[test]
    fn unit_levels_have_no_bits() {
        let t = topo(&[1, 4, 1, 2], &[7, 3, 9, 11]);
        assert_eq!(t.section_widths(), &[0, 2, 0, 1]);
        assert_eq!(t.num_pes(), 8);
        assert_eq!(t.pe_distance(0, 1), 3);
        assert_eq!(t.pe_distance(0, 4), 11);
        let single = topo(&[1], &[5]);
        assert_eq!(single.labels(), &[0]);
    }

    #[test]
    fn rejects_bad_specs() {
        assert!(matches!(HierarchySpec::new(vec![], vec![]), Err(Error::Validation(_))));
        assert!(matches!(HierarchySpec::new(vec![2, 0], vec![1, 2]), Err(Error::Validation(_))));
        assert!(matches!(HierarchySpec::new(vec![2, 2], vec![1]), Err(Error::Validation(_))));
        assert!(HierarchySpec::parse("4:2", "1:x").is_err());
        assert!(HierarchySpec::parse("4:-2", "1:2").is_err());
        let spec = HierarchySpec::parse("4:2:5:4", "1:10:100:1000").unwrap();
        assert_eq!(spec.children(), &[4, 2, 5, 4]);
    }

    #[test]
    fn rejects_label_overflow() {
        // 33 sections of 2 bits each
        let spec = HierarchySpec::new(vec![3; 33], vec![1; 33]).unwrap();
        let err = Topology::build(spec).unwrap_err();
        assert!(matches!(err, Error::Config(ref m) if m.contains("66 bits")), "{err}");
        let wide = HierarchySpec::new(vec![1 << 20, 1 << 13], vec![1, 2]).unwrap();
        assert!(matches!(Topology::build(wide), Err(Error::Config(_))));
    }

    #[test]
    fn unknown_labels_are_rejected() {
        let t = topo(&[3, 3], &[1, 5]);
        assert!(t.label_to_pe(3).is_err());
        assert!(t.label_to_pe(16).is_err());
        assert!(t.pe_label(9).is_err());
    }
}

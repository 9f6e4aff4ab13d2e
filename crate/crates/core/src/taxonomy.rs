//! The six-type cell taxonomy and label sets over it.

use core::fmt;

/// The six red-blood-cell morphology classes.
///
/// The order is fixed and shared everywhere a 6-vector is indexed by type:
/// probability vectors, head arrays and serialized models.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CellType {
    OvalDisc,
    ElongatedSickle,
    Reticulocyte,
    Granular,
    Echinocyte,
    Stomatocyte,
}

impl CellType {
    pub const COUNT: usize = 6;

    pub const ALL: [CellType; 6] = [
        CellType::OvalDisc,
        CellType::ElongatedSickle,
        CellType::Reticulocyte,
        CellType::Granular,
        CellType::Echinocyte,
        CellType::Stomatocyte,
    ];

    /// Index in the fixed type order.
    #[inline]
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<CellType> {
        Self::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            CellType::OvalDisc => "oval_disc",
            CellType::ElongatedSickle => "elongated_sickle",
            CellType::Reticulocyte => "reticulocyte",
            CellType::Granular => "granular",
            CellType::Echinocyte => "echinocyte",
            CellType::Stomatocyte => "stomatocyte",
        }
    }

    pub fn from_name(name: &str) -> Option<CellType> {
        Self::ALL.iter().copied().find(|t| t.name() == name)
    }
}

impl fmt::Display for CellType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A subset of the six cell types; may be empty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, PartialOrd, Ord)]
pub struct LabelSet(u8);

impl LabelSet {
    pub const EMPTY: LabelSet = LabelSet(0);

    pub fn new() -> LabelSet {
        LabelSet(0)
    }

    pub fn from_types(types: &[CellType]) -> LabelSet {
        let mut s = LabelSet(0);
        for &t in types {
            s.insert(t);
        }
        s
    }

    #[inline]
    pub fn insert(&mut self, t: CellType) {
        self.0 |= 1 << t.index();
    }

    #[inline]
    pub fn contains(self, t: CellType) -> bool {
        self.0 & (1 << t.index()) != 0
    }

    #[inline]
    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn iter(self) -> impl Iterator<Item = CellType> {
        CellType::ALL.into_iter().filter(move |t| self.contains(*t))
    }

    pub fn intersects(self, other: LabelSet) -> bool {
        self.0 & other.0 != 0
    }

    /// Raw bit pattern in the fixed type order (bit 0 = oval_disc).
    #[inline]
    pub fn bits(self) -> u8 {
        self.0
    }
}

impl FromIterator<CellType> for LabelSet {
    fn from_iter<I: IntoIterator<Item = CellType>>(iter: I) -> Self {
        let mut s = LabelSet::new();
        for t in iter {
            s.insert(t);
        }
        s
    }
}

impl fmt::Display for LabelSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, t) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            f.write_str(t.name())?;
        }
        write!(f, "}}")
    }
}

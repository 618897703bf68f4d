//! Text layouts: one character per cell.
//!
//! `%` wall, `.` food pellet / brick, `P` agent (PacMan or paddle), `G` ghost
//! or computer paddle, `o` ball, space empty. Lines starting with `#` before
//! the grid are comments. The grid must be rectangular with a wall border.

use std::path::Path;

use super::GameError;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LayoutSpec {
    pub name: String,
    /// Full grid width, border included.
    pub width: usize,
    /// Full grid height, border included.
    pub height: usize,
    walls: Vec<bool>,
    /// Cells holding `P`, row-major order.
    pub agent_cells: Vec<usize>,
    /// Cells holding `G`, row-major order.
    pub ghost_cells: Vec<usize>,
    /// Cells holding `.`; item `i` of a configuration's bitmask is `item_cells[i]`.
    pub item_cells: Vec<usize>,
    pub ball_cells: Vec<usize>,
}

const BUILTIN: &[(&str, &str)] = &[
    ("v2", include_str!("../../layouts/pacman_v2.lay")),
    ("v3", include_str!("../../layouts/pacman_v3.lay")),
    ("v4", include_str!("../../layouts/pacman_v4.lay")),
    ("p1", include_str!("../../layouts/pong_p1.lay")),
    ("p2", include_str!("../../layouts/pong_p2.lay")),
    ("b1", include_str!("../../layouts/breakout_b1.lay")),
    ("b2", include_str!("../../layouts/breakout_b2.lay")),
    ("b3", include_str!("../../layouts/breakout_b3.lay")),
];

impl LayoutSpec {
    pub fn parse(name: &str, text: &str) -> Result<Self, GameError> {
        let invalid = |msg: String| GameError::LayoutInvalid(format!("{name}: {msg}"));
        let rows: Vec<&str> = text
            .lines()
            .map(|l| l.trim_end_matches('\r'))
            .skip_while(|l| l.starts_with('#') || l.trim().is_empty())
            .collect();
        let rows: Vec<&str> = {
            let mut rows = rows;
            while rows.last().is_some_and(|l| l.trim().is_empty()) {
                rows.pop();
            }
            rows
        };
        if rows.len() < 3 {
            return Err(invalid("grid needs at least 3 rows".into()));
        }
        let width = rows[0].chars().count();
        if width < 3 {
            return Err(invalid("grid needs at least 3 columns".into()));
        }
        let height = rows.len();
        if width * height > u16::MAX as usize {
            return Err(invalid("grid too large".into()));
        }
        let mut layout = LayoutSpec {
            name: name.to_string(),
            width,
            height,
            walls: vec![false; width * height],
            agent_cells: Vec::new(),
            ghost_cells: Vec::new(),
            item_cells: Vec::new(),
            ball_cells: Vec::new(),
        };
        for (r, row) in rows.iter().enumerate() {
            if row.chars().count() != width {
                return Err(invalid(format!(
                    "row {r} has {} columns, expected {width}",
                    row.chars().count()
                )));
            }
            for (c, ch) in row.chars().enumerate() {
                let cell = r * width + c;
                let border = r == 0 || c == 0 || r == height - 1 || c == width - 1;
                if border && ch != '%' {
                    return Err(invalid(format!("border cell ({r},{c}) is '{ch}', not a wall")));
                }
                match ch {
                    '%' => layout.walls[cell] = true,
                    '.' => layout.item_cells.push(cell),
                    'P' => layout.agent_cells.push(cell),
                    'G' => layout.ghost_cells.push(cell),
                    'o' => layout.ball_cells.push(cell),
                    ' ' => {}
                    other => return Err(invalid(format!("unknown cell character '{other}' at ({r},{c})"))),
                }
            }
        }
        if layout.item_cells.len() > 64 {
            return Err(invalid(format!("{} items exceed the 64-item limit", layout.item_cells.len())));
        }
        Ok(layout)
    }

    pub fn builtin(name: &str) -> Result<Self, GameError> {
        let text = BUILTIN
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| *t)
            .ok_or_else(|| GameError::UnknownLayout(name.to_string()))?;
        Self::parse(name, text)
    }

    pub fn builtin_names() -> impl Iterator<Item = &'static str> {
        BUILTIN.iter().map(|(n, _)| *n)
    }

    pub fn load(path: &Path) -> Result<Self, GameError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| GameError::LayoutInvalid(format!("{}: {e}", path.display())))?;
        Self::parse(&path.display().to_string(), &text)
    }

    #[inline]
    pub fn is_wall(&self, cell: usize) -> bool {
        self.walls[cell]
    }

    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn row_col(&self, cell: usize) -> (usize, usize) {
        (cell / self.width, cell % self.width)
    }

    /// Interior dimensions (border excluded).
    pub fn interior(&self) -> (usize, usize) {
        (self.width - 2, self.height - 2)
    }

    pub fn open_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.walls.len()).filter(|&c| !self.walls[c])
    }

    /// Open cells with at least one wall among their four neighbours.
    pub fn wall_adjacent_cells(&self) -> impl Iterator<Item = usize> + '_ {
        self.open_cells().filter(|&c| {
            let (r, col) = self.row_col(c);
            [(r - 1, col), (r + 1, col), (r, col - 1), (r, col + 1)]
                .into_iter()
                .any(|(rr, cc)| self.walls[self.cell(rr, cc)])
        })
    }

    /// True if any wall lies strictly inside the border.
    pub fn has_interior_walls(&self) -> bool {
        (1..self.height - 1)
            .any(|r| (1..self.width - 1).any(|c| self.walls[self.cell(r, c)]))
    }

    /// Index of `cell` within `item_cells`, if it holds an item initially.
    pub fn item_bit(&self, cell: usize) -> Option<u32> {
        self.item_cells.iter().position(|&c| c == cell).map(|i| i as u32)
    }

    /// Canonical text form (no comments).
    pub fn render(&self) -> String {
        let mut out = String::with_capacity((self.width + 1) * self.height);
        for r in 0..self.height {
            for c in 0..self.width {
                let cell = self.cell(r, c);
                let ch = if self.walls[cell] {
                    '%'
                } else if self.agent_cells.contains(&cell) {
                    'P'
                } else if self.ghost_cells.contains(&cell) {
                    'G'
                } else if self.ball_cells.contains(&cell) {
                    'o'
                } else if self.item_cells.contains(&cell) {
                    '.'
                } else {
                    ' '
                };
                out.push(ch);
            }
            out.push('\n');
        }
        out
    }

    /// Equality of the grid itself, ignoring the name.
    pub fn same_grid(&self, other: &LayoutSpec) -> bool {
        self.width == other.width
            && self.height == other.height
            && self.walls == other.walls
            && self.agent_cells == other.agent_cells
            && self.ghost_cells == other.ghost_cells
            && self.item_cells == other.item_cells
            && self.ball_cells == other.ball_cells
    }
}

//! Assembly of the fused per-article input vector.

use ndarray::{s, Array2};
use rand::Rng;

use crate::corpus::UserContext;
use crate::nn::{init_uniform, scatter_add, ParamId, ParamStore};

/// Everything the fusion network sees about one article in one context.
#[derive(Clone, Copy, Debug)]
pub struct ArticleInput<'a> {
    /// Row of the id table; 0 is the shared out-of-vocabulary row.
    pub id_row: usize,
    pub ace: Option<&'a [f64]>,
    pub category: u32,
    pub novelty_z: f64,
    pub recency_z: f64,
    pub context: &'a UserContext,
}

#[derive(Clone, Copy, Debug)]
pub enum Encoding {
    OneHot { card: usize },
    Embed { table: ParamId, card: usize, dim: usize },
}

impl Encoding {
    pub fn new<R: Rng>(
        store: &mut ParamStore,
        name: &str,
        card: usize,
        dim: usize,
        one_hot_max: usize,
        rng: &mut R,
    ) -> Self {
        let card = card.max(1);
        if card < one_hot_max {
            Encoding::OneHot { card }
        } else {
            let table = store.add(format!("{name}.emb"), init_uniform(rng, card, dim, dim));
            Encoding::Embed { table, card, dim }
        }
    }

    pub fn width(&self) -> usize {
        match *self {
            Encoding::OneHot { card } => card,
            Encoding::Embed { dim, .. } => dim,
        }
    }

    fn card(&self) -> usize {
        match *self {
            Encoding::OneHot { card } | Encoding::Embed { card, .. } => card,
        }
    }
}

/// Embedding rows used by one assembled batch, for the backward pass.
#[derive(Clone, Debug, Default)]
pub struct Lookups {
    fields: Vec<(ParamId, usize, usize, Vec<usize>)>,
}

#[derive(Clone, Debug)]
pub struct InputLayout {
    pub id_table: ParamId,
    pub id_dim: usize,
    pub ace_dim: usize,
    pub category: Encoding,
    pub context: [Encoding; 7],
    pub weekday: Encoding,
}

impl InputLayout {
    pub fn width(&self) -> usize {
        self.id_dim
            + self.ace_dim
            + self.category.width()
            + 2
            + self.context.iter().map(Encoding::width).sum::<usize>()
            + 2
            + self.weekday.width()
    }

    pub fn assemble(&self, store: &ParamStore, rows: &[ArticleInput<'_>]) -> (Array2<f64>, Lookups) {
        let mut x = Array2::zeros((rows.len(), self.width()));
        let mut lookups = Lookups::default();
        let mut col = 0;

        let ids: Vec<usize> = rows.iter().map(|r| r.id_row).collect();
        let table = store.value(self.id_table);
        for (i, &r) in ids.iter().enumerate() {
            x.slice_mut(s![i, col..col + self.id_dim]).assign(&table.row(r));
        }
        lookups.fields.push((self.id_table, col, self.id_dim, ids));
        col += self.id_dim;

        for (i, r) in rows.iter().enumerate() {
            if let Some(a) = r.ace {
                for (j, v) in a.iter().take(self.ace_dim).enumerate() {
                    x[[i, col + j]] = *v;
                }
            }
        }
        col += self.ace_dim;

        col = self.categorical(store, &mut x, &mut lookups, col, &self.category, |r| r.category, rows);

        for (i, r) in rows.iter().enumerate() {
            x[[i, col]] = r.novelty_z;
            x[[i, col + 1]] = r.recency_z;
        }
        col += 2;

        for f in 0..7 {
            col = self.categorical(store, &mut x, &mut lookups, col, &self.context[f], |r| {
                r.context.categorical()[f]
            }, rows);
        }

        for (i, r) in rows.iter().enumerate() {
            x[[i, col]] = r.context.hour_sin;
            x[[i, col + 1]] = r.context.hour_cos;
        }
        col += 2;

        col = self.categorical(store, &mut x, &mut lookups, col, &self.weekday, |r| {
            r.context.weekday as u32
        }, rows);
        debug_assert_eq!(col, self.width());
        (x, lookups)
    }

    #[allow(clippy::too_many_arguments)]
    fn categorical<F: Fn(&ArticleInput<'_>) -> u32>(
        &self,
        store: &ParamStore,
        x: &mut Array2<f64>,
        lookups: &mut Lookups,
        col: usize,
        enc: &Encoding,
        value: F,
        rows: &[ArticleInput<'_>],
    ) -> usize {
        let card = enc.card();
        let idx: Vec<usize> = rows
            .iter()
            .map(|r| {
                let v = value(r) as usize;
                if v < card {
                    v
                } else {
                    0
                }
            })
            .collect();
        match *enc {
            Encoding::OneHot { .. } => {
                for (i, &v) in idx.iter().enumerate() {
                    x[[i, col + v]] = 1.0;
                }
            }
            Encoding::Embed { table, dim, .. } => {
                let t = store.value(table);
                for (i, &v) in idx.iter().enumerate() {
                    x.slice_mut(s![i, col..col + dim]).assign(&t.row(v));
                }
                lookups.fields.push((table, col, dim, idx));
            }
        }
        col + enc.width()
    }

    /// Routes the input gradient into the embedding tables.
    pub fn backward(&self, store: &mut ParamStore, lookups: &Lookups, dx: &Array2<f64>) {
        for (table, col, dim, idx) in &lookups.fields {
            let part = dx.slice(s![.., *col..*col + *dim]).to_owned();
            scatter_add(store, *table, idx, &part);
        }
    }
}

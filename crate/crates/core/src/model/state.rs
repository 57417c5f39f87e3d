use crate::field::{GridSpec, ScalarField};

use super::ModelError;

/// Ordered set of named fields: the evolving fields of a model plus any
/// auxiliary inputs (temperature sources, noise, production rates).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelState {
    names: Vec<String>,
    fields: Vec<ScalarField>,
}

impl ModelState {
    pub fn new() -> Self {
        Self {
            names: Vec::new(),
            fields: Vec::new(),
        }
    }

    /// Inserts or replaces a field. All fields must share one grid layout.
    pub fn insert(&mut self, name: &str, field: ScalarField) -> Result<(), ModelError> {
        if let Some(first) = self.fields.first() {
            first.grid().check_compatible(field.grid())?;
        }
        match self.names.iter().position(|n| n == name) {
            Some(k) => self.fields[k] = field,
            None => {
                self.names.push(name.to_string());
                self.fields.push(field);
            }
        }
        Ok(())
    }

    pub fn with(mut self, name: &str, field: ScalarField) -> Result<Self, ModelError> {
        self.insert(name, field)?;
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<&ScalarField> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|k| &self.fields[k])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut ScalarField> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(move |k| &mut self.fields[k])
    }

    pub fn require(&self, name: &str) -> Result<&ScalarField, ModelError> {
        self.get(name)
            .ok_or_else(|| ModelError::MissingField(name.to_string()))
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn fields(&self) -> &[ScalarField] {
        &self.fields
    }

    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    pub fn grid(&self) -> Option<GridSpec> {
        self.fields.first().map(|f| *f.grid())
    }

    pub fn is_finite(&self) -> bool {
        self.fields.iter().all(|f| f.is_finite())
    }
}

impl Default for ModelState {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insert_get_replace() {
        let g = GridSpec::new(4, 4, 1.0, 0.1).unwrap();
        let mut s = ModelState::new();
        s.insert("a", ScalarField::constant(g, 1.0)).unwrap();
        s.insert("b", ScalarField::constant(g, 2.0)).unwrap();
        s.insert("a", ScalarField::constant(g, 3.0)).unwrap();
        assert_eq!(s.names(), &["a".to_string(), "b".to_string()]);
        assert_eq!(s.require("a").unwrap().at(0, 0), 3.0);
        assert!(matches!(s.require("c"), Err(ModelError::MissingField(_))));

        let other = GridSpec::new(8, 4, 1.0, 0.1).unwrap();
        assert!(s.insert("c", ScalarField::zeros(other)).is_err());
    }
}

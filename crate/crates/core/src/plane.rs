use serde::{Deserialize, Serialize};

use crate::scalar::{cast, Real};

/// Dense channel-major grid, indexed `(channel, x, y)`.
///
/// Storage is `data[(c * height + y) * width + x]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Plane<T> {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub data: Vec<T>,
}

impl<T: Real> Plane<T> {
    pub fn zeros(width: usize, height: usize, channels: usize) -> Self {
        Self {
            width,
            height,
            channels,
            data: vec![T::zero(); width * height * channels],
        }
    }

    pub fn from_vec(width: usize, height: usize, channels: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == width * height * channels).then_some(Self {
            width,
            height,
            channels,
            data,
        })
    }

    #[inline]
    pub fn index(&self, c: usize, x: usize, y: usize) -> usize {
        debug_assert!(c < self.channels && x < self.width && y < self.height);
        (c * self.height + y) * self.width + x
    }

    #[inline]
    pub fn get(&self, c: usize, x: usize, y: usize) -> T {
        self.data[self.index(c, x, y)]
    }

    #[inline]
    pub fn set(&mut self, c: usize, x: usize, y: usize, v: T) {
        let i = self.index(c, x, y);
        self.data[i] = v;
    }

    /// Stores `max(current, v)`.
    #[inline]
    pub fn max_assign(&mut self, c: usize, x: usize, y: usize, v: T) {
        let i = self.index(c, x, y);
        if v > self.data[i] {
            self.data[i] = v;
        }
    }

    pub fn channel(&self, c: usize) -> &[T] {
        let n = self.width * self.height;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn same_shape<U>(&self, other: &Plane<U>) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.channels, self.height, self.width]
    }

    pub fn cast<U: Real>(&self) -> Plane<U> {
        Plane {
            width: self.width,
            height: self.height,
            channels: self.channels,
            data: self.data.iter().map(|&v| cast(v)).collect(),
        }
    }

    pub fn is_all_zero(&self) -> bool {
        self.data.iter().all(|v| v.is_zero())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_is_channel_major() {
        let mut p = Plane::<f64>::zeros(3, 2, 2);
        p.set(1, 2, 1, 7.0);
        assert_eq!(p.data[(2 + 1) * 3 + 2], 7.0);
        assert_eq!(p.channel(1)[5], 7.0);
        p.max_assign(1, 2, 1, 3.0);
        assert_eq!(p.get(1, 2, 1), 7.0);
    }

    #[test]
    fn from_vec_checks_length() {
        assert!(Plane::from_vec(2, 2, 1, vec![0.0f32; 3]).is_none());
        assert!(Plane::from_vec(2, 2, 1, vec![0.0f32; 4]).is_some());
    }
}

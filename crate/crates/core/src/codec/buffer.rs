use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BufferError {
    #[error("buffer already has room: capacity {capacity}, fill {fill}, needed {needed}")]
    SufficientCapacity { capacity: usize, fill: usize, needed: usize },
    #[error("buffer would exceed its maximum of {max} bytes (requested {requested})")]
    CapacityOverflow { max: usize, requested: usize },
    #[error("buffer capacity must be at least 1")]
    ZeroCapacity,
}

/// Byte buffer with an explicit logical capacity that grows by doubling.
///
/// The capacity is tracked independently of the backing `Vec` so growth is
/// observable and deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrowableBuffer {
    data: Vec<u8>,
    capacity: usize,
    initial_capacity: usize,
    growths: u32,
    max_capacity: Option<usize>,
}

impl GrowableBuffer {
    pub fn with_capacity(capacity: usize) -> Result<Self, BufferError> {
        if capacity == 0 {
            return Err(BufferError::ZeroCapacity);
        }
        Ok(Self {
            data: Vec::with_capacity(capacity.min(1 << 20)),
            capacity,
            initial_capacity: capacity,
            growths: 0,
            max_capacity: None,
        })
    }

    /// Caps the capacity; growth past `max` fails with `CapacityOverflow`.
    pub fn with_max_capacity(mut self, max: usize) -> Self {
        self.max_capacity = Some(max);
        self
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn fill(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn available(&self) -> usize {
        self.capacity - self.data.len()
    }

    /// Number of doublings since construction.
    pub fn growths(&self) -> u32 {
        self.growths
    }

    pub fn initial_capacity(&self) -> usize {
        self.initial_capacity
    }

    pub fn as_slice(&self) -> &[u8] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<u8> {
        self.data
    }

    pub fn clear(&mut self) {
        self.data.clear();
    }

    /// Doubles the capacity until `fill + needed` fits.
    ///
    /// Only valid when the buffer cannot already hold `needed` more bytes;
    /// otherwise the buffer is left untouched and `SufficientCapacity` is
    /// returned.
    pub fn increase_buffer(&mut self, needed: usize) -> Result<(), BufferError> {
        let fill = self.data.len();
        if needed <= self.available() {
            return Err(BufferError::SufficientCapacity { capacity: self.capacity, fill, needed });
        }
        let required = fill.checked_add(needed).ok_or(BufferError::CapacityOverflow {
            max: self.max_capacity.unwrap_or(usize::MAX),
            requested: usize::MAX,
        })?;
        let mut capacity = self.capacity;
        let mut doublings = 0;
        while capacity < required {
            capacity = capacity.checked_mul(2).ok_or(BufferError::CapacityOverflow {
                max: self.max_capacity.unwrap_or(usize::MAX),
                requested: required,
            })?;
            doublings += 1;
        }
        if let Some(max) = self.max_capacity {
            if capacity > max {
                return Err(BufferError::CapacityOverflow { max, requested: required });
            }
        }
        self.data.reserve(required - fill);
        self.capacity = capacity;
        self.growths += doublings;
        Ok(())
    }

    /// Appends `fragment`, growing first if it does not fit.
    pub fn append_buffer(&mut self, fragment: &[u8]) -> Result<(), BufferError> {
        if fragment.len() > self.available() {
            self.increase_buffer(fragment.len())?;
        }
        self.data.extend_from_slice(fragment);
        Ok(())
    }

    /// Appends one byte; same growth rule as [`append_buffer`](Self::append_buffer).
    pub fn push(&mut self, byte: u8) -> Result<(), BufferError> {
        if self.available() == 0 {
            self.increase_buffer(1)?;
        }
        self.data.push(byte);
        Ok(())
    }

    /// Appends `length` bytes copied one at a time from `offset` back.
    ///
    /// The copy may overlap the bytes it writes. Caller guarantees
    /// `1 <= offset <= fill`.
    pub(crate) fn copy_back(&mut self, offset: usize, length: usize) -> Result<(), BufferError> {
        debug_assert!(offset >= 1 && offset <= self.data.len());
        if length > self.available() {
            self.increase_buffer(length)?;
        }
        let start = self.data.len() - offset;
        for i in 0..length {
            let byte = self.data[start + i];
            self.data.push(byte);
        }
        Ok(())
    }
}

//! Fixed-layout record encodings used on the wire.
//!
//! Global vertex IDs and weights travel as 64-bit values, block IDs and
//! other local fields as 32-bit values, all little endian.

pub trait Wire: Sized {
    /// Encoded size in bytes.
    const SIZE: usize;

    fn put(&self, out: &mut Vec<u8>);

    /// Decodes one record from the first `SIZE` bytes of `buf`.
    fn get(buf: &[u8]) -> Self;
}

macro_rules! wire_int {
    ($($ty:ty),*) => {$(
        impl Wire for $ty {
            const SIZE: usize = std::mem::size_of::<$ty>();

            #[inline]
            fn put(&self, out: &mut Vec<u8>) {
                out.extend_from_slice(&self.to_le_bytes());
            }

            #[inline]
            fn get(buf: &[u8]) -> Self {
                let mut raw = [0u8; std::mem::size_of::<$ty>()];
                raw.copy_from_slice(&buf[..Self::SIZE]);
                <$ty>::from_le_bytes(raw)
            }
        }
    )*};
}

wire_int!(u8, u32, u64, i64);

impl Wire for bool {
    const SIZE: usize = 1;

    fn put(&self, out: &mut Vec<u8>) {
        out.push(u8::from(*self));
    }

    fn get(buf: &[u8]) -> Self {
        buf[0] != 0
    }
}

macro_rules! wire_tuple {
    ($($name:ident : $idx:tt),+) => {
        impl<$($name: Wire),+> Wire for ($($name,)+) {
            const SIZE: usize = 0 $(+ $name::SIZE)+;

            #[inline]
            fn put(&self, out: &mut Vec<u8>) {
                $(self.$idx.put(out);)+
            }

            #[inline]
            #[allow(unused_assignments)]
            fn get(buf: &[u8]) -> Self {
                let mut at = 0;
                ($({
                    let v = $name::get(&buf[at..]);
                    at += $name::SIZE;
                    v
                },)+)
            }
        }
    };
}

wire_tuple!(A: 0, B: 1);
wire_tuple!(A: 0, B: 1, C: 2);
wire_tuple!(A: 0, B: 1, C: 2, D: 3);
wire_tuple!(A: 0, B: 1, C: 2, D: 3, E: 4);
wire_tuple!(A: 0, B: 1, C: 2, D: 3, E: 4, F: 5);

pub fn encode_all<T: Wire>(records: &[T]) -> Vec<u8> {
    let mut out = Vec::with_capacity(records.len() * T::SIZE);
    for r in records {
        r.put(&mut out);
    }
    out
}

pub fn decode_all<T: Wire>(bytes: &[u8]) -> Vec<T> {
    debug_assert_eq!(bytes.len() % T::SIZE.max(1), 0);
    if T::SIZE == 0 {
        return Vec::new();
    }
    bytes.chunks_exact(T::SIZE).map(T::get).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn tuple_records_survive_the_wire(recs in proptest::collection::vec((any::<u64>(), any::<i64>(), any::<u32>()), 0..64)) {
            let bytes = encode_all(&recs);
            prop_assert_eq!(bytes.len(), recs.len() * 20);
            prop_assert_eq!(decode_all::<(u64, i64, u32)>(&bytes), recs);
        }
    }
}

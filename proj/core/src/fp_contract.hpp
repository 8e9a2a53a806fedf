#pragma once

// Disables fused multiply-add contraction inside one function so that
// a * wa + b * wb rounds identically with the operands swapped.
#if defined(__clang__)
#define XENCDEC_NO_FMA_ATTR
#define XENCDEC_NO_FMA_BODY _Pragma("clang fp contract(off)")
#elif defined(__GNUC__)
#define XENCDEC_NO_FMA_ATTR __attribute__((optimize("fp-contract=off")))
#define XENCDEC_NO_FMA_BODY
#else
#define XENCDEC_NO_FMA_ATTR
#define XENCDEC_NO_FMA_BODY
#endif

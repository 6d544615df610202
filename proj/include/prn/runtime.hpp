#pragma once

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace prn {

// Training allocates and frees many multi-megabyte activation buffers per
// step. glibc serves those with mmap/munmap by default, so every step pays
// for fresh page faults; keeping them on the heap avoids that.
inline void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 256 << 20);
#endif
}

}  // namespace prn

#pragma once

#include "mopro/numkit/kernels.hpp"

namespace mopro::numkit::kernels {

namespace scalar {
extern const KernelTable table;
}

#if defined(MOPRO_HAVE_AVX2)
namespace avx2 {
extern const KernelTable table;
}
#endif

}  // namespace mopro::numkit::kernels

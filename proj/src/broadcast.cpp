#include "ndkit/broadcast.hpp"

namespace ndkit {

BroadcastPlan broadcast_shapes(const Shape& a, const Shape& b) {
    const std::size_t rank = std::max(a.size(), b.size());
    BroadcastPlan plan;
    plan.a_padded.assign(rank, 1);
    plan.b_padded.assign(rank, 1);
    std::copy(a.begin(), a.end(), plan.a_padded.begin() + (rank - a.size()));
    std::copy(b.begin(), b.end(), plan.b_padded.begin() + (rank - b.size()));
    plan.out.resize(rank);
    for (std::size_t d = 0; d < rank; ++d) {
        const Dim da = plan.a_padded[d], db = plan.b_padded[d];
        if (da != db && da != 1 && db != 1)
            throw ShapeError("cannot broadcast " + shape_to_string(a) + " with " +
                             shape_to_string(b) + ": axis " + std::to_string(d) +
                             " has sizes " + std::to_string(da) + " and " + std::to_string(db));
        plan.out[d] = std::max(da, db);
    }
    plan.same_shape = a == b;
    return plan;
}

}  // namespace ndkit

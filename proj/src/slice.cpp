#include "ndkit/slice.hpp"

#include <charconv>

namespace ndkit {

std::vector<ResolvedSlice> resolve_slice(const SliceSpec& spec, const Shape& shape) {
    if (spec.size() > shape.size())
        throw ShapeError("slice spec has " + std::to_string(spec.size()) +
                         " entries but the array has rank " + std::to_string(shape.size()));
    std::vector<ResolvedSlice> rs(shape.size());
    for (std::size_t d = 0; d < shape.size(); ++d) {
        const Dim n = shape[d];
        const SliceEntry e = d < spec.size() ? spec[d] : SliceEntry::all();
        switch (e.tag) {
            case SliceEntry::Tag::All:
                rs[d] = {0, 1, n};
                break;
            case SliceEntry::Tag::Index: {
                Dim i = e.start < 0 ? e.start + n : e.start;
                if (i < 0 || i >= n)
                    throw IndexError("slice index " + std::to_string(e.start) +
                                     " out of range for axis " + std::to_string(d) + " of size " +
                                     std::to_string(n));
                rs[d] = {i, 1, 1};
                break;
            }
            case SliceEntry::Tag::Range: {
                Dim start = e.start < 0 ? e.start + n : e.start;
                Dim stop = e.stop < 0 ? e.stop + n : e.stop;
                if (start < 0 || start >= n || stop < 0 || stop >= n)
                    throw IndexError("slice range [" + std::to_string(e.start) + ":" +
                                     std::to_string(e.stop) + "] out of range for axis " +
                                     std::to_string(d) + " of size " + std::to_string(n));
                const Dim step = e.step ? *e.step : (stop >= start ? Dim{1} : Dim{-1});
                if (step == 0) throw ShapeError("slice step must be non-zero");
                if ((step > 0 && stop < start) || (step < 0 && stop > start))
                    throw ShapeError("slice on axis " + std::to_string(d) +
                                     " selects no elements: step direction never reaches stop");
                rs[d] = {start, step, (stop - start) / step + 1};
                break;
            }
        }
    }
    return rs;
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return "";
    return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

Dim parse_dim(const std::string& s) {
    Dim v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size())
        throw ShapeError("malformed slice number '" + s + "'");
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::size_t pos = 0;
    while (true) {
        const auto next = s.find(sep, pos);
        parts.push_back(s.substr(pos, next - pos));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return parts;
}

}  // namespace

SliceSpec parse_slice_spec(const std::string& text) {
    SliceSpec spec;
    for (const std::string& raw : split(text, ',')) {
        const std::string entry = trim(raw);
        if (entry.empty()) throw ShapeError("empty entry in slice spec '" + text + "'");
        if (entry == "*") {
            spec.push_back(SliceEntry::all());
            continue;
        }
        const auto parts = split(entry, ':');
        if (parts.size() == 1) {
            spec.push_back(SliceEntry::index(parse_dim(trim(parts[0]))));
        } else if (parts.size() == 2) {
            spec.push_back(SliceEntry::range(parse_dim(trim(parts[0])), parse_dim(trim(parts[1]))));
        } else if (parts.size() == 3) {
            spec.push_back(SliceEntry::range(parse_dim(trim(parts[0])), parse_dim(trim(parts[1])),
                                             parse_dim(trim(parts[2]))));
        } else {
            throw ShapeError("slice entry '" + entry + "' has too many ':' separators");
        }
    }
    if (spec.empty()) throw ShapeError("slice spec must have at least one entry");
    return spec;
}

}  // namespace ndkit

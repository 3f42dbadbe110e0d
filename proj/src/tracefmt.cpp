// SPDX-License-Identifier: Apache-2.0
#include "ctxprobe/tracefmt.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "ctxprobe/error.hpp"

namespace ctxprobe::trace {

namespace {

constexpr std::array<char, 4> kMagic = {'O', 'C', 'P', 'T'};

class Writer {
public:
    void u8(std::uint8_t v) { buf_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u64(std::uint64_t v) { put(v, 8); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void bytes(std::string_view s) { buf_.insert(buf_.end(), s.begin(), s.end()); }
    void floats(std::span<const float> v) {
        for (float f : v) f32(f);
    }
    std::vector<std::uint8_t> take() { return std::move(buf_); }

private:
    void put(std::uint64_t v, int n) {
        for (int i = 0; i < n; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    std::vector<std::uint8_t> buf_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> data) : data_(data) {}

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return data_.size() - pos_; }
    void set_record(std::optional<std::size_t> r) { record_ = r; }

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u64() { return get(8); }
    float f32() { return std::bit_cast<float>(u32()); }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(reinterpret_cast<const char *>(data_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    void floats(std::vector<float> &out, std::size_t n) {
        need(n * 4);
        for (std::size_t i = 0; i < n; ++i) out.push_back(f32());
    }

private:
    void need(std::size_t n) {
        if (remaining() < n) {
            std::string where = "truncated trace at byte offset " + std::to_string(pos_);
            if (record_) where += " in record " + std::to_string(*record_);
            where += " (needed " + std::to_string(n) + " bytes, " +
                     std::to_string(remaining()) + " left)";
            throw FormatError(where);
        }
    }
    std::uint64_t get(int n) {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i) v |= std::uint64_t{data_[pos_ + i]} << (8 * i);
        pos_ += static_cast<std::size_t>(n);
        return v;
    }

    std::span<const std::uint8_t> data_;
    std::size_t pos_ = 0;
    std::optional<std::size_t> record_;
};

bool bitwise_equal(const std::vector<float> &a, const std::vector<float> &b) {
    return a.size() == b.size() &&
           (a.empty() || std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

bool any_nan(const std::vector<float> &v) {
    return std::any_of(v.begin(), v.end(), [](float f) { return std::isnan(f); });
}

} // namespace

std::optional<std::size_t> TraceHeader::label_column(std::string_view label) const {
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i].label == label) return i;
    }
    return std::nullopt;
}

void TraceHeader::validate() const {
    if (version != kVersion) throw ValidationError("unsupported trace version");
    if (!has_raw() && !has_reduced()) {
        throw ValidationError("trace header sets neither raw nor reduced payload");
    }
    if (grid_cells() == 0) throw ValidationError("trace grid has no cells");
    if (has_raw() && hidden_dim == 0) throw ValidationError("raw payload needs hidden_dim > 0");
    std::set<std::string_view> seen;
    for (const auto &l : labels) {
        if (l.label.size() > 0xFFFF) throw ValidationError("label too long: " + l.label);
        if (!seen.insert(l.label).second) {
            throw ValidationError("duplicate label in trace label table: " + l.label);
        }
    }
}

std::size_t TraceHeader::encoded_size() const {
    std::size_t n = 4 + 2 * 5 + 4 + 4;
    for (const auto &l : labels) n += 2 + l.label.size() + 4;
    return n;
}

std::string TrialTrace::instance_id() const {
    const auto bar = trial_id.rfind('|');
    return bar == std::string::npos ? trial_id : trial_id.substr(0, bar);
}

std::size_t TrialTrace::logit_rows(const TraceHeader &h) const {
    return h.full_grid_logits() ? h.grid_cells() : patch_indices.size();
}

float TrialTrace::logit(const TraceHeader &h, std::size_t layer, std::size_t row,
                        std::size_t label) const {
    const std::size_t rows = logit_rows(h);
    return logits[(layer * rows + row) * h.labels.size() + label];
}

void TrialTrace::validate(const TraceHeader &h) const {
    auto fail = [&](const std::string &what) {
        throw ValidationError("trial " + trial_id + ": " + what);
    };
    if (trial_id.empty() || trial_id.size() > 0xFFFF) fail("trial_id length out of range");
    for (std::size_t i = 0; i < patch_indices.size(); ++i) {
        if (patch_indices[i] >= h.grid_cells()) fail("patch index outside the grid");
        if (i > 0 && patch_indices[i] <= patch_indices[i - 1]) {
            fail("patch indices not strictly increasing");
        }
    }
    const std::size_t layers = h.layer_count;
    const std::size_t p = patch_indices.size();
    const std::size_t want_logits = h.has_reduced() ? layers * logit_rows(h) * h.labels.size() : 0;
    const std::size_t want_cos =
        h.has_reduced() && condition == Condition::object_only ? layers * p : 0;
    const std::size_t want_raw = h.has_raw() ? layers * p * h.hidden_dim : 0;
    if (logits.size() != want_logits) fail("logit payload has the wrong size");
    if (cosines.size() != want_cos) fail("cosine payload has the wrong size");
    if (raw.size() != want_raw) fail("raw payload has the wrong size");
}

std::size_t TrialTrace::encoded_size(const TraceHeader &) const {
    return 2 + trial_id.size() + 1 + 4 + 4 * patch_indices.size() +
           4 * (logits.size() + cosines.size() + raw.size());
}

bool TrialTrace::operator==(const TrialTrace &o) const {
    return trial_id == o.trial_id && condition == o.condition &&
           patch_indices == o.patch_indices && bitwise_equal(logits, o.logits) &&
           bitwise_equal(cosines, o.cosines) && bitwise_equal(raw, o.raw);
}

std::vector<std::uint8_t> encode_trace(const TraceHeader &header,
                                       std::span<const TrialTrace> trials) {
    header.validate();
    for (const auto &t : trials) t.validate(header);

    Writer w;
    w.bytes(std::string_view(kMagic.data(), kMagic.size()));
    w.u16(header.version);
    w.u16(header.flags);
    w.u16(header.grid_rows);
    w.u16(header.grid_cols);
    w.u16(header.layer_count);
    w.u32(header.hidden_dim);
    w.u32(static_cast<std::uint32_t>(header.labels.size()));
    for (const auto &l : header.labels) {
        w.u16(static_cast<std::uint16_t>(l.label.size()));
        w.bytes(l.label);
        w.u32(l.token_id);
    }

    const std::size_t layers = header.layer_count;
    for (const auto &t : trials) {
        w.u16(static_cast<std::uint16_t>(t.trial_id.size()));
        w.bytes(t.trial_id);
        w.u8(static_cast<std::uint8_t>(t.condition));
        w.u32(static_cast<std::uint32_t>(t.patch_indices.size()));
        for (auto idx : t.patch_indices) w.u32(idx);
        const std::size_t nlog = t.logits.size() / std::max<std::size_t>(layers, 1);
        const std::size_t ncos = t.cosines.size() / std::max<std::size_t>(layers, 1);
        const std::size_t nraw = t.raw.size() / std::max<std::size_t>(layers, 1);
        for (std::size_t l = 0; l < layers; ++l) {
            w.floats(std::span(t.logits).subspan(l * nlog, nlog));
            w.floats(std::span(t.cosines).subspan(l * ncos, ncos));
            w.floats(std::span(t.raw).subspan(l * nraw, nraw));
        }
    }
    w.u64(trials.size());
    return w.take();
}

TraceFile decode_trace(std::span<const std::uint8_t> bytes) {
    Reader r(bytes);
    TraceFile file;
    TraceHeader &h = file.header;

    const std::string magic = r.bytes(4);
    if (magic != std::string_view(kMagic.data(), kMagic.size())) {
        throw FormatError("not a trace file: bad magic");
    }
    h.version = r.u16();
    if (h.version != kVersion) {
        throw FormatError("unsupported trace version " + std::to_string(h.version));
    }
    h.flags = r.u16();
    h.grid_rows = r.u16();
    h.grid_cols = r.u16();
    h.layer_count = r.u16();
    h.hidden_dim = r.u32();
    const std::uint32_t label_count = r.u32();
    for (std::uint32_t i = 0; i < label_count; ++i) {
        LabelEntry e;
        e.label = r.bytes(r.u16());
        e.token_id = r.u32();
        h.labels.push_back(std::move(e));
    }
    try {
        h.validate();
    } catch (const ValidationError &e) {
        throw FormatError(std::string("invalid trace header: ") + e.what());
    }

    const std::size_t layers = h.layer_count;
    const std::size_t nlabels = h.labels.size();
    while (r.remaining() > 8) {
        const std::size_t index = file.trials.size();
        r.set_record(index);
        TrialTrace t;
        t.trial_id = r.bytes(r.u16());
        const std::uint8_t cond = r.u8();
        if (cond > 1) {
            throw FormatError("record " + std::to_string(index) + ": bad condition byte");
        }
        t.condition = static_cast<Condition>(cond);
        const std::uint32_t p = r.u32();
        if (std::size_t{p} * 4 > r.remaining()) {
            // Reading the indices would run off the end; report it as truncation.
            r.bytes(std::size_t{p} * 4);
        }
        t.patch_indices.reserve(p);
        for (std::uint32_t i = 0; i < p; ++i) t.patch_indices.push_back(r.u32());
        const std::size_t nlog = h.has_reduced() ? t.logit_rows(h) * nlabels : 0;
        const std::size_t ncos = h.has_reduced() && t.condition == Condition::object_only ? p : 0;
        const std::size_t nraw = h.has_raw() ? std::size_t{p} * h.hidden_dim : 0;
        for (std::size_t l = 0; l < layers; ++l) {
            r.floats(t.logits, nlog);
            r.floats(t.cosines, ncos);
            r.floats(t.raw, nraw);
        }
        t.validate(h);
        t.nan_warning = any_nan(t.logits) || any_nan(t.cosines) || any_nan(t.raw);
        file.trials.push_back(std::move(t));
    }
    r.set_record(std::nullopt);
    if (r.remaining() != 8) {
        throw FormatError("truncated trace at byte offset " + std::to_string(r.offset()) +
                          ": record " + std::to_string(file.trials.size()) +
                          " incomplete or record-count footer missing");
    }
    const std::uint64_t count = r.u64();
    if (count != file.trials.size()) {
        throw FormatError("trace footer says " + std::to_string(count) + " records, found " +
                          std::to_string(file.trials.size()));
    }
    return file;
}

void write_trace(const TraceHeader &header, std::span<const TrialTrace> trials,
                 const std::filesystem::path &path) {
    const auto bytes = encode_trace(header, trials);
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char *>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("write failed: " + path.string());
}

TraceFile read_trace(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open trace file: " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                          std::istreambuf_iterator<char>());
    return decode_trace(bytes);
}

ValidationReport validate_trace(const TraceHeader &header, std::span<const TrialTrace> trials,
                                std::span<const PromptPlan> plans) {
    ValidationReport rep;

    std::set<std::string> plan_keys;
    std::set<std::string> needed_labels;
    for (const auto &p : plans) {
        plan_keys.insert(image_trial_key(p.instance_id, p.condition));
        if (p.task == Task::scene || p.task == Task::superordinate) {
            for (const auto &o : p.options) needed_labels.insert(o.label);
        }
    }
    for (const auto &label : needed_labels) {
        if (!header.label_column(label)) {
            rep.issues.push_back("label table is missing \"" + label + "\"");
        }
    }

    std::map<std::string, const TrialTrace *> by_key;
    for (const auto &t : trials) {
        if (!by_key.emplace(t.trial_id, &t).second) {
            rep.issues.push_back("duplicate trace record " + t.trial_id);
        }
        if (image_trial_key(t.instance_id(), t.condition) != t.trial_id) {
            rep.issues.push_back("record " + t.trial_id + " does not match its condition");
        }
        if (!plan_keys.contains(t.trial_id)) {
            rep.issues.push_back("record " + t.trial_id + " has no prompt in the plan");
        }
        if (t.nan_warning) rep.warnings.push_back("record " + t.trial_id + " contains NaN");
    }
    for (const auto &key : plan_keys) {
        if (!by_key.contains(key)) rep.warnings.push_back("no trace record for " + key);
    }

    for (const auto &t : trials) {
        if (t.condition != Condition::object_only) continue;
        const auto mate = by_key.find(image_trial_key(t.instance_id(), Condition::full_scene));
        if (mate == by_key.end()) {
            if (header.has_raw()) {
                rep.issues.push_back("object-only record " + t.trial_id +
                                     " has no full-scene counterpart");
            }
            continue;
        }
        if (mate->second->patch_indices != t.patch_indices) {
            rep.issues.push_back("patch sets differ between the conditions of " +
                                 t.instance_id());
        }
    }
    return rep;
}

} // namespace ctxprobe::trace

#pragma once

// Line-oriented input with transparent gzip detection, plus small helpers
// shared by the parsers and writers.

#include <zlib.h>

#include <charconv>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "fareval/errors.hpp"

namespace fareval {

// Streams lines from a plain or gzip-compressed file (magic bytes 1f 8b).
// Line numbers are 1-based. CR and a leading UTF-8 BOM are stripped.
class LineReader {
  public:
    explicit LineReader(const std::string& path) : path_(path) {
        std::ifstream probe(path, std::ios::binary);
        if (!probe) throw MissingInput("cannot open " + path);
        unsigned char magic[2] = {0, 0};
        probe.read(reinterpret_cast<char*>(magic), 2);
        bool gz = probe.gcount() == 2 && magic[0] == 0x1f && magic[1] == 0x8b;
        probe.close();
        if (gz) {
            gz_ = gzopen(path.c_str(), "rb");
            if (!gz_) throw MissingInput("cannot open " + path);
        } else {
            stream_.open(path, std::ios::binary);
            if (!stream_) throw MissingInput("cannot open " + path);
        }
    }

    ~LineReader() {
        if (gz_) gzclose(gz_);
    }

    LineReader(const LineReader&) = delete;
    LineReader& operator=(const LineReader&) = delete;

    // Returns false at end of input.
    bool next(std::string& line) {
        line.clear();
        bool got = gz_ ? next_gz(line) : static_cast<bool>(std::getline(stream_, line));
        if (!got) return false;
        ++line_no_;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line_no_ == 1 && line.size() >= 3 && static_cast<unsigned char>(line[0]) == 0xEF &&
            static_cast<unsigned char>(line[1]) == 0xBB && static_cast<unsigned char>(line[2]) == 0xBF)
            line.erase(0, 3);
        return true;
    }

    std::size_t line_number() const { return line_no_; }
    const std::string& path() const { return path_; }

  private:
    bool next_gz(std::string& line) {
        char buf[4096];
        bool any = false;
        while (true) {
            if (gz_pos_ < gz_buf_.size()) {
                auto nl = gz_buf_.find('\n', gz_pos_);
                if (nl != std::string::npos) {
                    line.append(gz_buf_, gz_pos_, nl - gz_pos_);
                    gz_pos_ = nl + 1;
                    return true;
                }
                line.append(gz_buf_, gz_pos_, std::string::npos);
                any = any || !line.empty();
                gz_buf_.clear();
                gz_pos_ = 0;
            }
            int n = gzread(gz_, buf, sizeof(buf));
            if (n < 0) throw ParseError(path_, line_no_ + 1, "corrupt gzip stream");
            if (n == 0) return any || !line.empty();
            gz_buf_.assign(buf, static_cast<std::size_t>(n));
            gz_pos_ = 0;
            any = true;
        }
    }

    std::string path_;
    std::ifstream stream_;
    gzFile gz_ = nullptr;
    std::string gz_buf_;
    std::size_t gz_pos_ = 0;
    std::size_t line_no_ = 0;
};

inline std::vector<std::string_view> split_on(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        std::size_t pos = s.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(s.substr(start));
            return out;
        }
        out.push_back(s.substr(start, pos - start));
        start = pos + 1;
    }
}

// Splits on any run of spaces/tabs, skipping leading/trailing whitespace.
inline std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && (s[i] == ' ' || s[i] == '\t')) ++i;
        std::size_t start = i;
        while (i < s.size() && s[i] != ' ' && s[i] != '\t') ++i;
        if (i > start) out.push_back(s.substr(start, i - start));
    }
    return out;
}

inline bool parse_int64(std::string_view s, std::int64_t& out) {
    const char* first = s.data();
    const char* last = s.data() + s.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && !s.empty();
}

// Shortest representation that round-trips a double exactly.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    double back = 0.0;
    std::sscanf(buf, "%lg", &back);
    if (back == v) {
        for (int prec = 1; prec < 17; ++prec) {
            char shorter[32];
            std::snprintf(shorter, sizeof(shorter), "%.*g", prec, v);
            std::sscanf(shorter, "%lg", &back);
            if (back == v) return shorter;
        }
    }
    return buf;
}

inline void require_file(const std::string& path, const std::string& what) {
    if (!std::filesystem::exists(path)) throw MissingInput(what + " not found: " + path);
}

}  // namespace fareval

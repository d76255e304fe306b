#include "manifest.hpp"

#include "gmaw/error.hpp"
#include "gmaw/kv_config.hpp"

#include <openssl/evp.h>

#include <array>
#include <fstream>
#include <memory>

namespace gmaw::cli {

std::string sha256_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open input file " + path.string());
    std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), &EVP_MD_CTX_free);
    if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 0xf];
    }
    return out;
}

namespace {

// Config values are trimmed and cut at '#', so arguments are percent-encoded.
std::string encode(const std::string& s) {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (c == '%' || c == '#' || c == '=' || c <= ' ' || c >= 0x7f) {
            out += '%';
            out += hex[c >> 4];
            out += hex[c & 0xf];
        } else {
            out += static_cast<char>(c);
        }
    }
    return out;
}

std::string decode(const std::string& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (s[i] == '%' && i + 2 < s.size()) {
            out += static_cast<char>(std::stoi(s.substr(i + 1, 2), nullptr, 16));
            i += 2;
        } else {
            out += s[i];
        }
    }
    return out;
}

}  // namespace

void RunManifest::add_input(const std::filesystem::path& path) {
    inputs.emplace_back(path.string(), sha256_file(path));
}

std::string RunManifest::to_string() const {
    KeyValueConfig cfg;
    cfg.set("command", command);
    cfg.set("version", version);
    cfg.set("seed", std::to_string(seed));
    cfg.set("output_dir", encode(output_dir.string()));
    cfg.set("argc", std::to_string(args.size()));
    for (std::size_t i = 0; i < args.size(); ++i) cfg.set("arg." + std::to_string(i), encode(args[i]));
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        cfg.set("input." + std::to_string(i) + ".path", encode(inputs[i].first));
        cfg.set("input." + std::to_string(i) + ".sha256", inputs[i].second);
    }
    return cfg.to_string();
}

void RunManifest::write(const std::filesystem::path& dir) const {
    std::ofstream out(dir / "manifest.txt", std::ios::binary);
    if (!out) throw ValidationError("cannot write manifest in " + dir.string());
    out << to_string();
}

RunManifest RunManifest::load(const std::filesystem::path& path) {
    const KeyValueConfig cfg = KeyValueConfig::load(path);
    RunManifest m;
    m.command = cfg.text("command");
    m.version = cfg.text("version");
    m.seed = std::stoull(cfg.text("seed"));
    m.output_dir = decode(cfg.text("output_dir"));
    const auto argc = static_cast<std::size_t>(std::stoul(cfg.text("argc")));
    for (std::size_t i = 0; i < argc; ++i) m.args.push_back(decode(cfg.text("arg." + std::to_string(i))));
    for (std::size_t i = 0; cfg.contains("input." + std::to_string(i) + ".path"); ++i) {
        m.inputs.emplace_back(decode(cfg.text("input." + std::to_string(i) + ".path")),
                              cfg.text("input." + std::to_string(i) + ".sha256"));
    }
    return m;
}

}  // namespace gmaw::cli

#pragma once

#include <stdexcept>
#include <string>

namespace semifl {

// Broad failure classes. Each maps onto a CLI exit status.
enum class error_kind {
    config = 1,  // bad configuration or clustering inventory
    data = 2,    // ingestion, partitioning, malformed input tensors
    runtime = 3, // internal invariants, metric domain errors, checkpoint I/O
};

class error : public std::runtime_error {
public:
    error(error_kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    error_kind kind() const noexcept { return kind_; }
    int exit_code() const noexcept { return static_cast<int>(kind_); }

private:
    error_kind kind_;
};

struct config_error : error {
    explicit config_error(const std::string& what) : error(error_kind::config, what) {}
};

struct clustering_error : error {
    explicit clustering_error(const std::string& what) : error(error_kind::config, what) {}
};

struct input_error : error {
    explicit input_error(const std::string& what) : error(error_kind::data, what) {}
};

struct ingestion_error : error {
    explicit ingestion_error(const std::string& what) : error(error_kind::data, what) {}
};

struct partition_error : error {
    explicit partition_error(const std::string& what) : error(error_kind::data, what) {}
};

struct internal_error : error {
    explicit internal_error(const std::string& what) : error(error_kind::runtime, what) {}
};

struct metric_error : error {
    explicit metric_error(const std::string& what) : error(error_kind::runtime, what) {}
};

struct checkpoint_error : error {
    explicit checkpoint_error(const std::string& what) : error(error_kind::runtime, what) {}
};

/// Call inside a catch block: rethrows the active semifl error as the same
/// type with `prefix` prepended to its message.
[[noreturn]] inline void rethrow_with_context(const std::string& prefix) {
    try {
        throw;
    } catch (const config_error& e) {
        throw config_error(prefix + e.what());
    } catch (const clustering_error& e) {
        throw clustering_error(prefix + e.what());
    } catch (const input_error& e) {
        throw input_error(prefix + e.what());
    } catch (const ingestion_error& e) {
        throw ingestion_error(prefix + e.what());
    } catch (const partition_error& e) {
        throw partition_error(prefix + e.what());
    } catch (const internal_error& e) {
        throw internal_error(prefix + e.what());
    } catch (const metric_error& e) {
        throw metric_error(prefix + e.what());
    } catch (const checkpoint_error& e) {
        throw checkpoint_error(prefix + e.what());
    } catch (const error& e) {
        throw error(e.kind(), prefix + e.what());
    }
}

} // namespace semifl

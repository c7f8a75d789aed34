#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace flexlattice {

// Base class for all typed errors thrown by the library. The CLI maps
// these onto exit codes; tests catch the concrete types.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& msg)
        : Error("config error [" + field + "]: " + msg), field_(std::move(field)) {}
    const std::string& field() const { return field_; }

private:
    std::string field_;
};

// -- signals --------------------------------------------------------------

class MissingFile : public Error {
public:
    explicit MissingFile(const std::string& path) : Error("missing file: " + path) {}
};

class MalformedRow : public Error {
public:
    MalformedRow(std::size_t line, const std::string& msg)
        : Error("malformed row at line " + std::to_string(line) + ": " + msg), line_(line) {}
    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

class GridMismatch : public Error {
public:
    explicit GridMismatch(const std::string& msg) : Error("grid mismatch: " + msg) {}
};

class NonFiniteInput : public Error {
public:
    explicit NonFiniteInput(const std::string& msg) : Error("non-finite input: " + msg) {}
};

// -- devices --------------------------------------------------------------

class NegativePower : public Error {
public:
    explicit NegativePower(double u_kw)
        : Error("commanded power out of range: " + std::to_string(u_kw) + " kW") {}
};

class NonFiniteState : public Error {
public:
    explicit NonFiniteState(const std::string& msg) : Error("non-finite state: " + msg) {}
};

class Infeasible : public Error {
public:
    explicit Infeasible(double deficit_kwh)
        : Error("infeasible schedule, deficit " + std::to_string(deficit_kwh) + " kWh"),
          deficit_kwh_(deficit_kwh) {}
    double deficit_kwh() const { return deficit_kwh_; }

private:
    double deficit_kwh_;
};

// -- flexfunc -------------------------------------------------------------

class NegativeTime : public Error {
public:
    explicit NegativeTime(double t_h) : Error("negative time: " + std::to_string(t_h) + " h") {}
};

class GridTooCoarse : public Error {
public:
    explicit GridTooCoarse(const std::string& msg) : Error("grid too coarse: " + msg) {}
};

class NoResponse : public Error {
public:
    NoResponse() : Error("observed response indistinguishable from zero") {}
};

// -- aggregator -----------------------------------------------------------

class NonFiniteMeasurement : public Error {
public:
    explicit NonFiniteMeasurement(double y) : Error("non-finite measurement: " + std::to_string(y)) {}
};

class MissingEstimate : public Error {
public:
    explicit MissingEstimate(const std::string& device_id)
        : Error("no estimate for device: " + device_id) {}
};

// -- market ---------------------------------------------------------------

class WindowOutOfGrid : public Error {
public:
    explicit WindowOutOfGrid(const std::string& msg) : Error("window out of grid: " + msg) {}
};

class EmptyWindow : public Error {
public:
    EmptyWindow() : Error("empty optimization window") {}
};

// -- grid -----------------------------------------------------------------

class UnmappedDevice : public Error {
public:
    explicit UnmappedDevice(const std::string& device_id)
        : Error("device not mapped to a feeder node: " + device_id) {}
};

class BadFeeder : public Error {
public:
    explicit BadFeeder(const std::string& msg) : Error("bad feeder model: " + msg) {}
};

// -- engine ---------------------------------------------------------------

class ZeroMeanLoad : public Error {
public:
    ZeroMeanLoad() : Error("aggregate load has non-positive mean") {}
};

class MissingTrace : public Error {
public:
    explicit MissingTrace(const std::string& path) : Error("missing trace: " + path) {}
};

}  // namespace flexlattice

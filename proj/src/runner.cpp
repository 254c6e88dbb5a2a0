/// @file runner.cpp

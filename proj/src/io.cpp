/// @file io.cpp

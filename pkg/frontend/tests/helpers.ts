import { readFileSync } from "node:fs";
import { resolve } from "node:path";

// vitest runs with the project root as cwd; the DOM environment rewrites
// import.meta.url, so resolve fixtures from the filesystem directly
function fixturePath(name: string): string {
  return resolve(process.cwd(), "fixtures", name);
}

export function fixture<T>(name: string): T {
  return JSON.parse(readFileSync(fixturePath(name), "utf-8")) as T;
}

export function fixtureLines(name: string): string[] {
  return readFileSync(fixturePath(name), "utf-8")
    .split("\n")
    .filter((line) => line.trim().length > 0);
}

export function jsonResponse(payload: unknown, status = 200): Response {
  return new Response(JSON.stringify(payload), {
    status,
    headers: { "content-type": "application/json" },
  });
}

const http = require('http');

function formFields(body) {
  const fields = {};
  for (const pair of body.split('&')) {
    if (!pair) continue;
    const [key, value] = pair.split('=');
    fields[decodeURIComponent(key)] = decodeURIComponent((value || '').replace(/\+/g, ' '));
  }
  return fields;
}

const loginPage = `<!doctype html>
<html>
<head><title>Team Portal</title></head>
<body>
<h1>Sign in</h1>
<form method="post" action="/login">
  <label for="email">Email</label>
  <input id="email" name="email" type="text">
  <label for="password">Password</label>
  <input id="password" name="password" type="password">
  <button type="submit">Log in</button>
</form>
</body>
</html>
`;

function dashboard(email) {
  return `<!doctype html>
<html>
<head><title>Dashboard</title></head>
<body>
<h1>Welcome back</h1>
<p>You are signed in as ${email}.</p>
</body>
</html>
`;
}

const server = http.createServer((req, res) => {
  if (req.method === 'POST' && req.url === '/login') {
    let body = '';
    req.on('data', (chunk) => { body += chunk; });
    req.on('end', () => {
      res.writeHead(200, { 'Content-Type': 'text/html' });
      res.end(dashboard(formFields(body).email || 'guest'));
    });
    return;
  }
  res.writeHead(200, { 'Content-Type': 'text/html' });
  res.end(loginPage);
});

server.listen(process.env.PORT || 3000);
